//! Item-delivery robot on a grid with obstacles.
//!
//! States are free cells times a carry bit. Moving into a cell while empty
//! picks up an item there with that cell's probability; a loaded robot keeps
//! its item until it stands on a destination, where the item is delivered
//! and a fresh one may be found at the next cell.

use serde::{Deserialize, Serialize};

use super::{check_cell, manhattan, Cell};
use crate::chain::analyze_with;
use crate::error::{Error, Result};
use crate::model::{
    build_product, induce_chain, Choice, Dra, Mdp, ProductMdp, RabinPair, StateId, StationaryPolicy, UtilityFn,
    UtilityKind,
};
use crate::synthesis::{GeneralPlan, Method, SynthOptions};

pub const ACTIONS: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Destination {
    pub cell: Cell,
    pub reward: f64,
}

/// Probability of finding an item when entering each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ItemField {
    /// `base + row_slope * |dr| + col_slope * |dc|` with `(dr, dc)` the
    /// offset from `origin`, clamped to `[0, cap]`.
    Linear { origin: Cell, base: f64, row_slope: f64, col_slope: f64, cap: f64 },
    /// Explicit per-cell values, row-major.
    Grid { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Case1Params {
    pub rows: usize,
    pub cols: usize,
    pub start: Cell,
    pub obstacles: Vec<Cell>,
    pub destinations: Vec<Destination>,
    pub charging: Cell,
    /// Cost by Manhattan distance to the nearest destination; distances past
    /// the end use the last entry.
    pub cost_table: Vec<f64>,
    pub item_field: ItemField,
    pub thresholds: Vec<f64>,
}

impl Default for Case1Params {
    fn default() -> Self {
        Case1Params {
            rows: 9,
            cols: 9,
            start: [0, 0],
            obstacles: vec![
                [1, 1], [1, 2], [2, 1], [2, 2],
                [3, 6], [3, 7], [4, 6], [4, 7],
                [6, 2], [6, 3], [7, 2], [7, 3],
            ],
            destinations: vec![
                Destination { cell: [8, 0], reward: 2.0 },
                Destination { cell: [0, 8], reward: 1.0 },
            ],
            charging: [7, 0],
            cost_table: vec![3.2, 3.0, 2.7, 2.5, 1.5, 1.0, 1.0, 1.0, 1.0],
            item_field: ItemField::Linear { origin: [8, 0], base: 0.0, row_slope: 0.02, col_slope: 0.1, cap: 0.4 },
            thresholds: vec![0.005, 0.01, 0.05, 0.1],
        }
    }
}

impl Case1Params {
    pub fn item_probability(&self, cell: Cell) -> f64 {
        match &self.item_field {
            ItemField::Linear { origin, base, row_slope, col_slope, cap } => {
                let dr = cell[0].abs_diff(origin[0]) as f64;
                let dc = cell[1].abs_diff(origin[1]) as f64;
                (base + row_slope * dr + col_slope * dc).clamp(0.0, *cap)
            }
            ItemField::Grid { values } => values[cell[0]][cell[1]],
        }
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell[0] < self.rows && cell[1] < self.cols && !self.obstacles.contains(&cell)
    }

    pub fn distance_to_destination(&self, cell: Cell) -> usize {
        self.destinations.iter().map(|d| manhattan(cell, d.cell)).min().unwrap_or(0)
    }

    pub fn cost_at(&self, cell: Cell) -> f64 {
        let d = self.distance_to_destination(cell);
        self.cost_table[d.min(self.cost_table.len() - 1)]
    }

    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = (self.rows, self.cols);
        if rows == 0 || cols == 0 {
            return Err(Error::Param("grid must be nonempty".into()));
        }
        for &o in &self.obstacles {
            check_cell("obstacle", o, rows, cols)?;
        }
        let free = |what: &str, c: Cell| -> Result<()> {
            check_cell(what, c, rows, cols)?;
            if self.obstacles.contains(&c) {
                return Err(Error::Param(format!("{what} {c:?} is an obstacle")));
            }
            Ok(())
        };
        free("start", self.start)?;
        free("charging cell", self.charging)?;
        if self.destinations.is_empty() {
            return Err(Error::Param("at least one destination required".into()));
        }
        for d in &self.destinations {
            free("destination", d.cell)?;
            if !d.reward.is_finite() {
                return Err(Error::Param("destination reward must be finite".into()));
            }
        }
        if self.cost_table.is_empty() || self.cost_table.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Param("cost table must be nonempty and strictly positive".into()));
        }
        if let ItemField::Grid { values } = &self.item_field {
            if values.len() != rows || values.iter().any(|r| r.len() != cols) {
                return Err(Error::Param(format!("item field must be {rows}x{cols}")));
            }
        }
        if let ItemField::Linear { origin, cap, .. } = &self.item_field {
            check_cell("item field origin", *origin, rows, cols)?;
            if !(0.0..=1.0).contains(cap) {
                return Err(Error::Param("item field cap must lie in [0, 1]".into()));
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let p = self.item_probability([r, c]);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Param(format!("item probability {p} at [{r}, {c}] outside [0, 1]")));
                }
            }
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Param("thresholds must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Case1 {
    pub params: Case1Params,
    pub mdp: Mdp,
    pub reward: UtilityFn,
    pub cost: UtilityFn,
    /// Infinitely many deliveries, never an obstacle.
    pub phi1: Dra,
    /// As `phi1`, and the charging cell infinitely often.
    pub phi2: Dra,
    /// Per state: (cell, carry bit).
    pub cells: Vec<(Cell, u8)>,
}

impl Case1 {
    pub fn state_of(&self, cell: Cell, carry: u8) -> Option<StateId> {
        self.cells.iter().position(|&(c, i)| c == cell && i == carry)
    }

    pub fn is_delivery(&self, s: StateId) -> bool {
        let (cell, i) = self.cells[s];
        i == 1 && self.params.destinations.iter().any(|d| d.cell == cell)
    }
}

pub fn state_name(cell: Cell, carry: u8) -> String {
    format!("r{}c{}i{}", cell[0], cell[1], carry)
}

pub fn gen_case1(params: &Case1Params) -> Result<Case1> {
    params.validate()?;
    let mut cells = Vec::new();
    for r in 0..params.rows {
        for c in 0..params.cols {
            if params.is_free([r, c]) {
                cells.push(([r, c], 0u8));
                cells.push(([r, c], 1u8));
            }
        }
    }
    let index = |cell: Cell, i: u8| -> StateId {
        cells.binary_search(&(cell, i)).expect("free cell")
    };
    let is_dest = |cell: Cell| params.destinations.iter().any(|d| d.cell == cell);
    let mut choices = Vec::with_capacity(cells.len());
    let mut labels = Vec::with_capacity(cells.len());
    for &(cell, i) in &cells {
        let mut row = Vec::new();
        for (a, (dr, dc)) in MOVES.iter().enumerate() {
            let (Some(r), Some(c)) = (cell[0].checked_add_signed(*dr), cell[1].checked_add_signed(*dc)) else {
                continue;
            };
            let target = [r, c];
            if !params.is_free(target) {
                continue;
            }
            let p = params.item_probability(target);
            let delivers = i == 1 && is_dest(cell);
            let mut succ = Vec::new();
            if i == 0 || delivers {
                if 1.0 - p > 0.0 {
                    succ.push((index(target, 0), 1.0 - p));
                }
                if p > 0.0 {
                    succ.push((index(target, 1), p));
                }
            } else {
                succ.push((index(target, 1), 1.0));
            }
            row.push(Choice { action: a, succ });
        }
        choices.push(row);
        let mut l = Vec::new();
        if i == 1 && is_dest(cell) {
            l.push(0);
        }
        if cell == params.charging {
            l.push(1);
        }
        labels.push(l);
    }
    let mdp = Mdp {
        state_names: cells.iter().map(|&(c, i)| state_name(c, i)).collect(),
        action_names: ACTIONS.iter().map(|s| s.to_string()).collect(),
        prop_names: vec!["d".into(), "c".into(), "b".into()],
        initial: index(params.start, 0),
        choices,
        labels,
    };
    let reward = UtilityFn::from_fn(&mdp, UtilityKind::Reward, |s, _| {
        let (cell, i) = cells[s];
        if i == 1 {
            params.destinations.iter().find(|d| d.cell == cell).map_or(0.0, |d| d.reward)
        } else {
            0.0
        }
    });
    let cost = UtilityFn::from_fn(&mdp, UtilityKind::Cost, |s, _| params.cost_at(cells[s].0));
    Ok(Case1 { params: params.clone(), mdp, reward, cost, phi1: phi1_dra(), phi2: phi2_dra(), cells })
}

/// `GF d & G !b` over AP `[d, b]`: waiting, just delivered, violated.
pub fn phi1_dra() -> Dra {
    let mut d = Dra::new(vec!["d".into(), "b".into()], 3, 0);
    d.state_names = vec!["wait".into(), "seen_d".into(), "trap".into()];
    for q in 0..2 {
        d.set_edges(q, |sym| {
            if sym & 2 != 0 {
                2
            } else if sym & 1 != 0 {
                1
            } else {
                0
            }
        });
    }
    d.set_edges(2, |_| 2);
    d.pairs = vec![RabinPair { bad: vec![2], good: vec![1] }];
    d
}

/// `GF d & GF c & G !b` over AP `[d, c, b]`. States 0..3 record which of
/// d and c were seen since the last acceptance; 3 is accepting, 4 a trap.
pub fn phi2_dra() -> Dra {
    let mut d = Dra::new(vec!["d".into(), "c".into(), "b".into()], 5, 0);
    d.state_names = vec!["none".into(), "seen_d".into(), "seen_c".into(), "acc".into(), "trap".into()];
    let flags = |q: usize| match q {
        1 => (true, false),
        2 => (false, true),
        _ => (false, false),
    };
    for q in 0..4 {
        let (fd, fc) = flags(q);
        d.set_edges(q, |sym| {
            if sym & 4 != 0 {
                return 4;
            }
            match (fd || sym & 1 != 0, fc || sym & 2 != 0) {
                (true, true) => 3,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 0,
            }
        });
    }
    d.set_edges(4, |_| 4);
    d.pairs = vec![RabinPair { bad: vec![4], good: vec![3] }];
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phi1Summary {
    pub value: f64,
    pub efficiency: f64,
    pub no_perturbation: bool,
    /// Cells occupied with positive limit probability.
    pub recurrent_cells: Vec<Cell>,
    /// Long-run fraction of steps spent delivering.
    pub delivery_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case1Row {
    pub epsilon: f64,
    pub delta_es: f64,
    pub delta_ex: f64,
    /// Limit probability of the charging cell.
    pub charge_es: f64,
    pub charge_ex: f64,
    pub efficiency_es: f64,
    pub efficiency_ex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case1Report {
    pub states: usize,
    pub phi1: Phi1Summary,
    /// Optimum over accepting policies for the charging task.
    pub phi2_value: f64,
    pub phi2: Vec<Case1Row>,
}

/// Limit distribution from the initial state, summed onto base states.
pub fn base_limit(pm: &ProductMdp, base_states: usize, p: &StationaryPolicy, edge_tol: f64) -> Result<Vec<f64>> {
    let ca = analyze_with(&induce_chain(pm, p)?, edge_tol)?;
    let row = ca.limit_row(pm.initial);
    let mut out = vec![0.0; base_states];
    for (ps, w) in row.iter().enumerate() {
        out[pm.origin[ps].0] += w;
    }
    Ok(out)
}

pub fn run_case1(case: &Case1, opts: &SynthOptions) -> Result<Case1Report> {
    let eps0 = case.params.thresholds.first().copied().unwrap_or(0.01);
    let n = case.mdp.n_states();

    let p1 = build_product(&case.mdp, &case.phi1)?;
    let (r1, c1) = (p1.lift_utility(&case.reward), p1.lift_utility(&case.cost));
    let rep1 = GeneralPlan::new(&p1, &r1, &c1, opts)?.finish(eps0)?;
    let lim1 = base_limit(&p1, n, &rep1.policy, opts.edge_tol)?;
    let mut recurrent_cells: Vec<Cell> =
        (0..n).filter(|&s| lim1[s] > opts.edge_tol).map(|s| case.cells[s].0).collect();
    recurrent_cells.dedup();
    let phi1 = Phi1Summary {
        value: rep1.value,
        efficiency: rep1.efficiency,
        no_perturbation: rep1.components.iter().filter(|c| c.used).all(|c| c.no_perturbation),
        recurrent_cells,
        delivery_frequency: (0..n).filter(|&s| case.is_delivery(s)).map(|s| lim1[s]).sum(),
    };

    let p2 = build_product(&case.mdp, &case.phi2)?;
    let (r2, c2) = (p2.lift_utility(&case.reward), p2.lift_utility(&case.cost));
    // Perturbation is the point of this table, so never skip it.
    let plan2 = GeneralPlan::new(&p2, &r2, &c2, &SynthOptions { shortcut: false, ..*opts })?;
    let charge = |p: &StationaryPolicy| -> Result<f64> {
        let lim = base_limit(&p2, n, p, opts.edge_tol)?;
        Ok((0..n).filter(|&s| case.cells[s].0 == case.params.charging).map(|s| lim[s]).sum())
    };
    let mut rows = Vec::new();
    for &eps in &case.params.thresholds {
        let es = plan2.finish_with(eps, Method::Es)?;
        let ex = plan2.finish_with(eps, Method::Ex)?;
        rows.push(Case1Row {
            epsilon: eps,
            delta_es: es.delta().unwrap_or(f64::NAN),
            delta_ex: ex.delta().unwrap_or(f64::NAN),
            charge_es: charge(&es.policy)?,
            charge_ex: charge(&ex.policy)?,
            efficiency_es: es.efficiency,
            efficiency_ex: ex.efficiency,
        });
    }
    Ok(Case1Report { states: n, phi1, phi2_value: plan2.k_gain, phi2: rows })
}

/// The threshold table as CSV.
pub fn table_csv(rep: &Case1Report) -> String {
    let mut out = String::from("threshold,delta_es,delta_ex,charge_es,charge_ex,efficiency_es,efficiency_ex\n");
    for r in &rep.phi2 {
        out.push_str(&format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.9},{:.9}\n",
            r.epsilon, r.delta_es, r.delta_ex, r.charge_es, r.charge_ex, r.efficiency_es, r.efficiency_ex
        ));
    }
    out
}
