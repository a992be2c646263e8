//! Factory floor of concentric clockwise conveyor rings.
//!
//! Every cell of an odd-sized grid except the center belongs to a ring and
//! has one move to its clockwise ring successor. On the middle row, cells
//! left of the center also move sideways between rings. The robot holds a
//! permit bit: entering the command cell `g` grants it and entering the
//! material cell `r` consumes it, paying the bonus if it was held.

use serde::{Deserialize, Serialize};

use super::{check_cell, Cell};
use crate::chain::analyze;
use crate::error::{Error, Result};
use crate::lp::{decode_ratio_policy, solve_ratio_lfp};
use crate::model::{
    build_product, induce_chain, Choice, Dra, Mdp, RabinPair, StateId, StationaryPolicy, UtilityFn, UtilityKind,
};
use crate::synthesis::{synth_general, SynthOptions, SynthesisReport};

pub const ACTIONS: [&str; 4] = ["up", "down", "left", "right"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Case2Params {
    /// Odd grid side.
    pub size: usize,
    pub start: Cell,
    /// Command cell, label `g`.
    pub command: Cell,
    /// Material cell, label `r`.
    pub material: Cell,
    /// Reward for entering a cell on ring 1; overridden by `rewards`.
    pub ring1_reward: f64,
    /// Reward for entering any other cell; overridden by `rewards`.
    pub base_reward: f64,
    /// Cost of entering any cell; overridden by `costs`.
    pub base_cost: f64,
    pub rewards: Option<Vec<Vec<f64>>>,
    pub costs: Option<Vec<Vec<f64>>>,
    /// Bonus for entering the material cell with a permit.
    pub bonus: f64,
    pub epsilon: f64,
    /// Bonus values swept when classifying the ratio optimum.
    pub sweep: Vec<f64>,
}

impl Default for Case2Params {
    fn default() -> Self {
        Case2Params {
            size: 7,
            start: [3, 0],
            command: [2, 3],
            material: [6, 6],
            ring1_reward: 1.1,
            base_reward: 0.75,
            base_cost: 1.0,
            rewards: None,
            costs: None,
            bonus: 0.0,
            epsilon: 0.01,
            sweep: (0..=60).map(|k| k as f64 * 0.5).collect(),
        }
    }
}

impl Case2Params {
    pub fn ring(&self, cell: Cell) -> Option<usize> {
        let n = self.size;
        let k = cell[0].min(cell[1]).min(n - 1 - cell[0]).min(n - 1 - cell[1]);
        (cell != [n / 2, n / 2]).then_some(k)
    }

    /// Clockwise successor on the cell's ring.
    pub fn ring_successor(&self, cell: Cell) -> Option<Cell> {
        let k = self.ring(cell)?;
        let (lo, hi) = (k, self.size - 1 - k);
        let [r, c] = cell;
        Some(if c == lo && r > lo {
            [r - 1, c]
        } else if r == lo && c < hi {
            [r, c + 1]
        } else if c == hi && r < hi {
            [r + 1, c]
        } else {
            [r, c - 1]
        })
    }

    pub fn targets(&self, cell: Cell) -> Vec<(usize, Cell)> {
        let mut out = Vec::new();
        if let Some(t) = self.ring_successor(cell) {
            out.push(t);
        }
        let mid = self.size / 2;
        if cell[0] == mid && cell[1] < mid {
            if cell[1] > 0 {
                out.push([mid, cell[1] - 1]);
            }
            if cell[1] + 1 < mid {
                out.push([mid, cell[1] + 1]);
            }
        }
        let mut v: Vec<(usize, Cell)> = out
            .into_iter()
            .map(|t| {
                let a = match (t[0] as isize - cell[0] as isize, t[1] as isize - cell[1] as isize) {
                    (-1, 0) => 0,
                    (1, 0) => 1,
                    (0, -1) => 2,
                    _ => 3,
                };
                (a, t)
            })
            .collect();
        v.sort();
        v
    }

    pub fn reward_at(&self, cell: Cell) -> f64 {
        match &self.rewards {
            Some(g) => g[cell[0]][cell[1]],
            None if self.ring(cell) == Some(1) => self.ring1_reward,
            None => self.base_reward,
        }
    }

    pub fn cost_at(&self, cell: Cell) -> f64 {
        self.costs.as_ref().map_or(self.base_cost, |g| g[cell[0]][cell[1]])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size;
        if n < 5 || n % 2 == 0 {
            return Err(Error::Param("grid side must be odd and at least 5".into()));
        }
        for (what, c) in [("start", self.start), ("command cell", self.command), ("material cell", self.material)] {
            check_cell(what, c, n, n)?;
            if self.ring(c).is_none() {
                return Err(Error::Param(format!("{what} {c:?} is the excluded center")));
            }
        }
        if self.command == self.material {
            return Err(Error::Param("command and material cells must differ".into()));
        }
        for g in [&self.rewards, &self.costs].into_iter().flatten() {
            if g.len() != n || g.iter().any(|r| r.len() != n) {
                return Err(Error::Param(format!("per-cell grids must be {n}x{n}")));
            }
        }
        for r in 0..n {
            for c in 0..n {
                if !self.reward_at([r, c]).is_finite() {
                    return Err(Error::Param("rewards must be finite".into()));
                }
                let cost = self.cost_at([r, c]);
                if !(cost.is_finite() && cost > 0.0) {
                    return Err(Error::Param("costs must be strictly positive".into()));
                }
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Param("epsilon must be strictly positive".into()));
        }
        if self.sweep.iter().any(|b| !b.is_finite()) || !self.bonus.is_finite() {
            return Err(Error::Param("bonus values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Case2 {
    pub params: Case2Params,
    pub mdp: Mdp,
    pub cost: UtilityFn,
    /// `GF (g & F r)`.
    pub dra: Dra,
    /// Per state: (cell, permit bit).
    pub cells: Vec<(Cell, u8)>,
}

pub fn state_name(cell: Cell, permit: u8) -> String {
    format!("r{}c{}p{}", cell[0], cell[1], permit)
}

impl Case2 {
    /// Reward family member with the given bonus.
    pub fn reward(&self, bonus: f64) -> UtilityFn {
        let p = &self.params;
        UtilityFn::from_fn(&self.mdp, UtilityKind::Reward, |s, a| {
            let (cell, permit) = self.cells[s];
            let t = p.targets(cell).into_iter().find(|x| x.0 == a).expect("available action").1;
            p.reward_at(t) + if t == p.material && permit == 1 { bonus } else { 0.0 }
        })
    }

    pub fn state_of(&self, cell: Cell, permit: u8) -> Option<StateId> {
        self.cells.iter().position(|&(c, p)| c == cell && p == permit)
    }
}

pub fn gen_case2(params: &Case2Params) -> Result<Case2> {
    params.validate()?;
    let step = |permit: u8, t: Cell| -> u8 {
        if t == params.command {
            1
        } else if t == params.material {
            0
        } else {
            permit
        }
    };
    // Only states reachable from the start, so the model stays communicating.
    let init = (params.start, u8::from(params.start == params.command));
    let mut seen = std::collections::BTreeSet::from([init]);
    let mut stack = vec![init];
    while let Some((cell, permit)) = stack.pop() {
        for (_, t) in params.targets(cell) {
            let next = (t, step(permit, t));
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    let cells: Vec<(Cell, u8)> = seen.into_iter().collect();
    let index = |cell: Cell, p: u8| cells.binary_search(&(cell, p)).expect("grid cell");
    let mut choices = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    for &(cell, permit) in &cells {
        let row = params
            .targets(cell)
            .into_iter()
            .map(|(a, t)| {
                let next = step(permit, t);
                Choice { action: a, succ: vec![(index(t, next), 1.0)] }
            })
            .collect();
        choices.push(row);
        let mut l = Vec::new();
        if cell == params.command {
            l.push(0);
        }
        if cell == params.material {
            l.push(1);
        }
        labels.push(l);
    }
    let mdp = Mdp {
        state_names: cells.iter().map(|&(c, p)| state_name(c, p)).collect(),
        action_names: ACTIONS.iter().map(|s| s.to_string()).collect(),
        prop_names: vec!["g".into(), "r".into()],
        initial: index(init.0, init.1),
        choices,
        labels,
    };
    let cost = UtilityFn::from_fn(&mdp, UtilityKind::Cost, |s, a| {
        let t = params.targets(cells[s].0).into_iter().find(|x| x.0 == a).expect("available action").1;
        params.cost_at(t)
    });
    Ok(Case2 { params: params.clone(), mdp, cost, dra: task_dra(), cells })
}

/// `GF (g & F r)` over AP `[g, r]`: idle, holding a permit, accepted.
pub fn task_dra() -> Dra {
    let mut d = Dra::new(vec!["g".into(), "r".into()], 3, 0);
    d.state_names = vec!["idle".into(), "permit".into(), "done".into()];
    for q in [0, 2] {
        d.set_edges(q, |sym| match sym {
            3 => 2,
            1 => 1,
            _ => 0,
        });
    }
    d.set_edges(1, |sym| if sym & 2 != 0 { 2 } else { 1 });
    d.pairs = vec![RabinPair { bad: vec![], good: vec![2] }];
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    /// Recurrent class never collects the bonus.
    Plain,
    /// Recurrent class alternates command and material cells.
    Delivery,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub bonus: f64,
    pub value: f64,
    pub kind: LoopKind,
    pub cycle_length: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Case2Report {
    pub states: usize,
    pub sweep: Vec<SweepPoint>,
    /// Bonus at which the optimum switches to the delivery cycle, by
    /// bisection on the classification; `None` if the sweep never switches.
    pub critical_bonus: Option<f64>,
    /// Synthesis result for `params.bonus` under the task.
    pub synthesis: SynthesisReport,
}

/// Ratio optimum without the task at one bonus value.
pub fn classify(case: &Case2, bonus: f64) -> Result<SweepPoint> {
    let r = case.reward(bonus);
    let sol = solve_ratio_lfp(&case.mdp, &r, &case.cost)?;
    let p: StationaryPolicy = decode_ratio_policy(&case.mdp, &sol)?;
    let ca = analyze(&induce_chain(&case.mdp, &p)?)?;
    let cls = &ca.recurrent_classes[0];
    let hits = |cell: Cell| cls.iter().any(|&s| case.cells[s].0 == cell);
    let kind = if hits(case.params.command) && hits(case.params.material) {
        LoopKind::Delivery
    } else {
        LoopKind::Plain
    };
    Ok(SweepPoint { bonus, value: sol.value, kind, cycle_length: cls.len() })
}

pub fn run_case2(case: &Case2, opts: &SynthOptions) -> Result<Case2Report> {
    let sweep = case.params.sweep.iter().map(|&b| classify(case, b)).collect::<Result<Vec<_>>>()?;
    let mut critical_bonus = None;
    if let Some(w) = sweep.windows(2).find(|w| w[0].kind == LoopKind::Plain && w[1].kind == LoopKind::Delivery) {
        let (mut lo, mut hi) = (w[0].bonus, w[1].bonus);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if classify(case, mid)?.kind == LoopKind::Delivery {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        critical_bonus = Some(0.5 * (lo + hi));
    }
    let pm = build_product(&case.mdp, &case.dra)?;
    let r = pm.lift_utility(&case.reward(case.params.bonus));
    let c = pm.lift_utility(&case.cost);
    let synthesis = synth_general(&pm, &r, &c, case.params.epsilon, opts)?;
    Ok(Case2Report { states: case.mdp.n_states(), sweep, critical_bonus, synthesis })
}

pub fn sweep_csv(rep: &Case2Report) -> String {
    let mut out = String::from("bonus,value,kind,cycle_length\n");
    for p in &rep.sweep {
        let kind = match p.kind {
            LoopKind::Plain => "plain",
            LoopKind::Delivery => "delivery",
        };
        out.push_str(&format!("{},{:.9},{},{}\n", p.bonus, p.value, kind, p.cycle_length));
    }
    out
}
