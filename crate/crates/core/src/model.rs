//! Labeled MDPs, Rabin automata, products, policies and induced chains.
//!
//! All identities are dense indices assigned at construction. Each state
//! carries its available actions as a list of [`Choice`]s sorted by action
//! id; utilities and policies are stored aligned to that list, so
//! `policy.probs[s][i]` is the probability of `m.choices[s][i].action`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;
pub type PropId = usize;
pub type AutStateId = usize;
/// A letter of 2^AP, bit `i` set iff proposition `i` of the automaton holds.
pub type Symbol = u32;

/// Tolerance for validating probability distributions.
pub const VALIDATION_TOL: f64 = 1e-9;
/// Tolerance for internal algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Largest supported automaton alphabet, in propositions.
pub const MAX_AP: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: ActionId,
    pub succ: Vec<(StateId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub prop_names: Vec<String>,
    pub initial: StateId,
    /// Per state, the available actions sorted by action id.
    pub choices: Vec<Vec<Choice>>,
    /// Per state, the sorted propositions that hold.
    pub labels: Vec<Vec<PropId>>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.choices.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn n_choices(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    pub fn choice_index(&self, s: StateId, a: ActionId) -> Option<usize> {
        self.choices[s].binary_search_by_key(&a, |c| c.action).ok()
    }

    pub fn available(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        self.choices[s].iter().map(|c| c.action)
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn prop_index(&self, name: &str) -> Option<PropId> {
        self.prop_names.iter().position(|n| n == name)
    }

    pub fn has_label(&self, s: StateId, p: PropId) -> bool {
        self.labels[s].binary_search(&p).is_ok()
    }

    /// Extracts the closed sub-model on `states` keeping, per state, the
    /// listed choice indices. `initial` must be one of `states`.
    pub fn restrict(
        &self,
        states: &[StateId],
        keep: &[Vec<usize>],
        initial: StateId,
    ) -> Result<Restriction> {
        assert_eq!(states.len(), keep.len());
        let mut local = HashMap::with_capacity(states.len());
        for (i, &s) in states.iter().enumerate() {
            local.insert(s, i);
        }
        let init = *local
            .get(&initial)
            .ok_or_else(|| Error::Param(format!("initial state {initial} not in restriction")))?;
        let mut choices = Vec::with_capacity(states.len());
        for (&s, kept) in states.iter().zip(keep) {
            let mut row = Vec::with_capacity(kept.len());
            for &ci in kept {
                let c = &self.choices[s][ci];
                let mut succ = Vec::with_capacity(c.succ.len());
                for &(t, p) in &c.succ {
                    if p <= 0.0 {
                        continue;
                    }
                    let lt = *local.get(&t).ok_or_else(|| {
                        Error::Param(format!(
                            "restriction not closed: {} --{}--> {}",
                            self.state_names[s], self.action_names[c.action], self.state_names[t]
                        ))
                    })?;
                    succ.push((lt, p));
                }
                row.push(Choice { action: c.action, succ });
            }
            choices.push(row);
        }
        let mdp = Mdp {
            state_names: states.iter().map(|&s| self.state_names[s].clone()).collect(),
            action_names: self.action_names.clone(),
            prop_names: self.prop_names.clone(),
            initial: init,
            choices,
            labels: states.iter().map(|&s| self.labels[s].clone()).collect(),
        };
        Ok(Restriction { mdp, states: states.to_vec(), choice_map: keep.to_vec() })
    }
}

/// A closed sub-model with the maps back into its parent.
#[derive(Debug, Clone)]
pub struct Restriction {
    pub mdp: Mdp,
    /// Local state index to parent state index.
    pub states: Vec<StateId>,
    /// Local choice index to parent choice index, per local state.
    pub choice_map: Vec<Vec<usize>>,
}

impl Restriction {
    pub fn utility(&self, u: &UtilityFn) -> UtilityFn {
        let values = self
            .states
            .iter()
            .zip(&self.choice_map)
            .map(|(&s, map)| map.iter().map(|&ci| u.values[s][ci]).collect())
            .collect();
        UtilityFn { kind: u.kind, values }
    }

    /// Restricts a parent policy. Rows are renormalized over kept choices.
    pub fn policy(&self, p: &StationaryPolicy) -> StationaryPolicy {
        let probs = self
            .states
            .iter()
            .zip(&self.choice_map)
            .map(|(&s, map)| {
                let mut row: Vec<f64> = map.iter().map(|&ci| p.probs[s][ci]).collect();
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|x| *x /= total);
                }
                row
            })
            .collect();
        StationaryPolicy { probs }
    }

    /// Writes a local policy's rows into the corresponding parent rows.
    pub fn lift_policy(&self, local: &StationaryPolicy, parent: &mut StationaryPolicy) {
        for (li, (&s, map)) in self.states.iter().zip(&self.choice_map).enumerate() {
            parent.probs[s].iter_mut().for_each(|x| *x = 0.0);
            for (lc, &ci) in map.iter().enumerate() {
                parent.probs[s][ci] = local.probs[li][lc];
            }
        }
    }

    pub fn product(&self, pm: &ProductMdp) -> ProductMdp {
        let pairs = pm
            .pairs
            .iter()
            .map(|p| AccPair {
                bad: self.states.iter().map(|&s| p.bad[s]).collect(),
                good: self.states.iter().map(|&s| p.good[s]).collect(),
            })
            .collect();
        ProductMdp {
            mdp: self.mdp.clone(),
            origin: self.states.iter().map(|&s| pm.origin[s]).collect(),
            pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    BadInitial { initial: StateId },
    LabelShape,
    BadProp { state: StateId, prop: PropId },
    NoAction { state: StateId },
    BadAction { state: StateId, action: ActionId },
    UnsortedActions { state: StateId },
    BadSuccessor { state: StateId, action: ActionId, succ: StateId },
    DuplicateSuccessor { state: StateId, action: ActionId, succ: StateId },
    ProbabilityRange { state: StateId, action: ActionId, succ: StateId, prob: f64 },
    Stochasticity { state: StateId, action: ActionId, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadInitial { initial } => write!(f, "initial state {initial} out of range"),
            Violation::LabelShape => write!(f, "label table size differs from state count"),
            Violation::BadProp { state, prop } => {
                write!(f, "state {state}: unknown proposition {prop}")
            }
            Violation::NoAction { state } => write!(f, "state {state}: no available action"),
            Violation::BadAction { state, action } => {
                write!(f, "state {state}: unknown action {action}")
            }
            Violation::UnsortedActions { state } => {
                write!(f, "state {state}: actions not strictly increasing")
            }
            Violation::BadSuccessor { state, action, succ } => {
                write!(f, "state {state}, action {action}: unknown successor {succ}")
            }
            Violation::DuplicateSuccessor { state, action, succ } => {
                write!(f, "state {state}, action {action}: successor {succ} listed twice")
            }
            Violation::ProbabilityRange { state, action, succ, prob } => {
                write!(f, "state {state}, action {action}, successor {succ}: probability {prob} outside [0, 1]")
            }
            Violation::Stochasticity { state, action, sum } => {
                write!(f, "state {state}, action {action}: probabilities sum to {sum}")
            }
        }
    }
}

pub fn validate_mdp(m: &Mdp) -> Vec<Violation> {
    let n = m.n_states();
    let mut out = Vec::new();
    if m.initial >= n {
        out.push(Violation::BadInitial { initial: m.initial });
    }
    if m.labels.len() != n {
        out.push(Violation::LabelShape);
    } else {
        for (s, lab) in m.labels.iter().enumerate() {
            for &p in lab {
                if p >= m.prop_names.len() {
                    out.push(Violation::BadProp { state: s, prop: p });
                }
            }
        }
    }
    for (s, row) in m.choices.iter().enumerate() {
        if row.is_empty() {
            out.push(Violation::NoAction { state: s });
        }
        if row.windows(2).any(|w| w[0].action >= w[1].action) {
            out.push(Violation::UnsortedActions { state: s });
        }
        for c in row {
            let a = c.action;
            if a >= m.n_actions() {
                out.push(Violation::BadAction { state: s, action: a });
            }
            let mut seen = Vec::with_capacity(c.succ.len());
            let mut sum = 0.0;
            for &(t, p) in &c.succ {
                if t >= n {
                    out.push(Violation::BadSuccessor { state: s, action: a, succ: t });
                } else if seen.contains(&t) {
                    out.push(Violation::DuplicateSuccessor { state: s, action: a, succ: t });
                }
                seen.push(t);
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::ProbabilityRange { state: s, action: a, succ: t, prob: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > VALIDATION_TOL {
                out.push(Violation::Stochasticity { state: s, action: a, sum });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UtilityKind {
    Reward,
    Cost,
}

/// Reward or cost per state-action pair, aligned to `Mdp::choices`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFn {
    pub kind: UtilityKind,
    pub values: Vec<Vec<f64>>,
}

impl UtilityFn {
    pub fn from_fn(m: &Mdp, kind: UtilityKind, mut f: impl FnMut(StateId, ActionId) -> f64) -> Self {
        let values = m
            .choices
            .iter()
            .enumerate()
            .map(|(s, row)| row.iter().map(|c| f(s, c.action)).collect())
            .collect();
        UtilityFn { kind, values }
    }

    pub fn constant(m: &Mdp, kind: UtilityKind, v: f64) -> Self {
        Self::from_fn(m, kind, |_, _| v)
    }

    pub fn validate(&self, m: &Mdp) -> Result<()> {
        if self.values.len() != m.n_states()
            || self.values.iter().zip(&m.choices).any(|(v, c)| v.len() != c.len())
        {
            return Err(Error::Param("utility table shape does not match model".into()));
        }
        for (s, row) in self.values.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Param(format!(
                        "non-finite utility at ({}, {})",
                        m.state_names[s], m.action_names[m.choices[s][i].action]
                    )));
                }
                if self.kind == UtilityKind::Cost && v <= 0.0 {
                    return Err(Error::Param(format!(
                        "cost must be strictly positive at ({}, {})",
                        m.state_names[s], m.action_names[m.choices[s][i].action]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Memoryless randomized policy, aligned to `Mdp::choices`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn uniform(m: &Mdp) -> Self {
        let probs = m
            .choices
            .iter()
            .map(|row| vec![1.0 / row.len() as f64; row.len()])
            .collect();
        StationaryPolicy { probs }
    }

    /// Deterministic policy from one choice index per state.
    pub fn deterministic(m: &Mdp, pick: &[usize]) -> Self {
        let probs = m
            .choices
            .iter()
            .zip(pick)
            .map(|(row, &i)| {
                let mut r = vec![0.0; row.len()];
                r[i] = 1.0;
                r
            })
            .collect();
        StationaryPolicy { probs }
    }

    pub fn set_deterministic(&mut self, s: StateId, choice: usize) {
        self.probs[s].iter_mut().for_each(|x| *x = 0.0);
        self.probs[s][choice] = 1.0;
    }

    /// `(1 - delta) * self + delta * other`.
    pub fn mix(&self, other: &StationaryPolicy, delta: f64) -> StationaryPolicy {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (1.0 - delta) * x + delta * y).collect())
            .collect();
        StationaryPolicy { probs }
    }

    pub fn validate(&self, m: &Mdp) -> Result<()> {
        if self.probs.len() != m.n_states() {
            return Err(Error::PolicyMismatch(format!(
                "policy has {} rows, model has {} states",
                self.probs.len(),
                m.n_states()
            )));
        }
        for (s, (row, ch)) in self.probs.iter().zip(&m.choices).enumerate() {
            if row.len() != ch.len() {
                return Err(Error::PolicyMismatch(format!(
                    "state {}: {} entries for {} available actions",
                    m.state_names[s],
                    row.len(),
                    ch.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0 + VALIDATION_TOL).contains(&p)) {
                return Err(Error::PolicyMismatch(format!(
                    "state {}: probability outside [0, 1]",
                    m.state_names[s]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::PolicyMismatch(format!(
                    "state {}: probabilities sum to {sum}",
                    m.state_names[s]
                )));
            }
        }
        Ok(())
    }

    /// Per-state expected utility `v(s) = sum_a p(s)(a) u(s, a)`.
    pub fn utility_vector(&self, u: &UtilityFn) -> Vec<f64> {
        self.probs
            .iter()
            .zip(&u.values)
            .map(|(p, v)| p.iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }
}

/// Finite Markov chain started from a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mc {
    pub p: DMatrix<f64>,
    pub initial: StateId,
}

impl Mc {
    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p.nrows();
        if self.p.ncols() != n || self.initial >= n {
            return Err(Error::Param("malformed chain".into()));
        }
        for i in 0..n {
            let row = self.p.row(i);
            if row.iter().any(|&x| !(0.0..=1.0 + VALIDATION_TOL).contains(&x)) {
                return Err(Error::Param(format!("row {i} has entries outside [0, 1]")));
            }
            if (row.sum() - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::Param(format!("row {i} sums to {}", row.sum())));
            }
        }
        Ok(())
    }
}

pub fn induce_chain(m: &Mdp, p: &StationaryPolicy) -> Result<Mc> {
    p.validate(m)?;
    let n = m.n_states();
    let mut mat = DMatrix::zeros(n, n);
    for (s, (row, probs)) in m.choices.iter().zip(&p.probs).enumerate() {
        for (c, &w) in row.iter().zip(probs) {
            if w == 0.0 {
                continue;
            }
            for &(t, q) in &c.succ {
                mat[(s, t)] += w * q;
            }
        }
    }
    Ok(Mc { p: mat, initial: m.initial })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RabinPair {
    pub bad: Vec<AutStateId>,
    pub good: Vec<AutStateId>,
}

/// Deterministic Rabin automaton over 2^AP.
#[derive(Debug, Clone, PartialEq)]
pub struct Dra {
    pub ap: Vec<String>,
    pub state_names: Vec<String>,
    pub initial: AutStateId,
    /// `delta[q][symbol]`; `None` marks a missing edge.
    pub delta: Vec<Vec<Option<AutStateId>>>,
    pub pairs: Vec<RabinPair>,
}

impl Dra {
    /// Automaton with `n` states and no edges yet.
    pub fn new(ap: Vec<String>, n: usize, initial: AutStateId) -> Self {
        let width = 1usize << ap.len();
        Dra {
            ap,
            state_names: (0..n).map(|q| format!("q{q}")).collect(),
            initial,
            delta: vec![vec![None; width]; n],
            pairs: Vec::new(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.delta.len()
    }

    pub fn n_symbols(&self) -> usize {
        1 << self.ap.len()
    }

    pub fn step(&self, q: AutStateId, sym: Symbol) -> Option<AutStateId> {
        self.delta[q].get(sym as usize).copied().flatten()
    }

    /// Sets every edge of `q` via a total map from symbols to targets.
    pub fn set_edges(&mut self, q: AutStateId, mut f: impl FnMut(Symbol) -> AutStateId) {
        for sym in 0..self.n_symbols() {
            self.delta[q][sym] = Some(f(sym as Symbol));
        }
    }

    pub fn ap_index(&self, name: &str) -> Option<usize> {
        self.ap.iter().position(|a| a == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ap.len() > MAX_AP {
            return Err(Error::Param(format!("at most {MAX_AP} atomic propositions supported")));
        }
        let n = self.n_states();
        if self.initial >= n {
            return Err(Error::Param("automaton initial state out of range".into()));
        }
        if self.pairs.is_empty() {
            return Err(Error::Param("automaton has no Rabin pair".into()));
        }
        for p in &self.pairs {
            if p.bad.iter().chain(&p.good).any(|&q| q >= n) {
                return Err(Error::Param("Rabin pair references unknown state".into()));
            }
        }
        for (q, row) in self.delta.iter().enumerate() {
            if row.len() != self.n_symbols() {
                return Err(Error::Param("transition table width mismatch".into()));
            }
            for (sym, t) in row.iter().enumerate() {
                match t {
                    None => return Err(Error::Incompleteness { state: q, symbol: sym as Symbol }),
                    Some(t) if *t >= n => {
                        return Err(Error::Param(format!("edge from {q} to unknown state {t}")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Rabin pair over product states, as membership masks.
#[derive(Debug, Clone, PartialEq)]
pub struct AccPair {
    pub bad: Vec<bool>,
    pub good: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMdp {
    pub mdp: Mdp,
    /// Per product state, the (base state, automaton state) it stands for.
    pub origin: Vec<(StateId, AutStateId)>,
    pub pairs: Vec<AccPair>,
}

impl Deref for ProductMdp {
    type Target = Mdp;
    fn deref(&self) -> &Mdp {
        &self.mdp
    }
}

impl ProductMdp {
    /// Treats `mdp` as a product with the given pairs as (bad, good) state lists.
    pub fn from_parts(mdp: Mdp, pairs: &[(Vec<StateId>, Vec<StateId>)]) -> Self {
        let n = mdp.n_states();
        let mask = |v: &[StateId]| {
            let mut m = vec![false; n];
            v.iter().for_each(|&s| m[s] = true);
            m
        };
        let pairs = pairs.iter().map(|(b, g)| AccPair { bad: mask(b), good: mask(g) }).collect();
        ProductMdp { origin: (0..n).map(|s| (s, 0)).collect(), mdp, pairs }
    }

    /// Pulls a utility on the base model back along `origin`. Valid for
    /// products whose rows keep the base model's choice order.
    pub fn lift_utility(&self, u: &UtilityFn) -> UtilityFn {
        UtilityFn { kind: u.kind, values: self.origin.iter().map(|&(s, _)| u.values[s].clone()).collect() }
    }

    /// Index of a pair witnessing acceptance for a recurrent set of states.
    pub fn accepting_pair(&self, states: &[StateId]) -> Option<usize> {
        self.pairs.iter().position(|p| {
            states.iter().any(|&s| p.good[s]) && !states.iter().any(|&s| p.bad[s])
        })
    }
}

/// Symbol read by the automaton when the model is in state `s`.
fn symbol_of(m: &Mdp, ap_map: &[Option<PropId>], s: StateId) -> Symbol {
    ap_map
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_some_and(|p| m.has_label(s, p)))
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

/// Product of `m` and `d`, restricted to states reachable from the initial one.
pub fn build_product(m: &Mdp, d: &Dra) -> Result<ProductMdp> {
    if d.ap.len() > MAX_AP {
        return Err(Error::Param(format!("at most {MAX_AP} atomic propositions supported")));
    }
    let ap_map: Vec<Option<PropId>> = d.ap.iter().map(|a| m.prop_index(a)).collect();
    let symbols: Vec<Symbol> = (0..m.n_states()).map(|s| symbol_of(m, &ap_map, s)).collect();
    let step = |q: AutStateId, s: StateId| {
        d.step(q, symbols[s]).ok_or(Error::AlphabetMismatch { state: q, symbol: symbols[s] })
    };

    let mut index: HashMap<(StateId, AutStateId), StateId> = HashMap::new();
    let mut origin = Vec::new();
    let mut queue = VecDeque::new();
    let start = (m.initial, step(d.initial, m.initial)?);
    index.insert(start, 0);
    origin.push(start);
    queue.push_back(start);
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    while let Some((s, q)) = queue.pop_front() {
        let mut row = Vec::with_capacity(m.choices[s].len());
        for c in &m.choices[s] {
            let mut succ = Vec::with_capacity(c.succ.len());
            for &(t, p) in &c.succ {
                if p <= 0.0 {
                    continue;
                }
                let key = (t, step(q, t)?);
                let id = *index.entry(key).or_insert_with(|| {
                    origin.push(key);
                    queue.push_back(key);
                    origin.len() - 1
                });
                succ.push((id, p));
            }
            row.push(Choice { action: c.action, succ });
        }
        choices.push(row);
    }

    let n = origin.len();
    let pairs = d
        .pairs
        .iter()
        .map(|pair| AccPair {
            bad: origin.iter().map(|&(_, q)| pair.bad.contains(&q)).collect(),
            good: origin.iter().map(|&(_, q)| pair.good.contains(&q)).collect(),
        })
        .collect();
    let mdp = Mdp {
        state_names: origin
            .iter()
            .map(|&(s, q)| format!("{}@{}", m.state_names[s], d.state_names[q]))
            .collect(),
        action_names: m.action_names.clone(),
        prop_names: m.prop_names.clone(),
        initial: 0,
        choices,
        labels: origin.iter().map(|&(s, _)| m.labels[s].clone()).collect(),
    };
    debug_assert_eq!(mdp.n_states(), n);
    Ok(ProductMdp { mdp, origin, pairs })
}
