//! Random instance generators and brute-force oracles shared by the
//! integration tests. The oracles avoid the library's LP and linear-algebra
//! paths: limits come from repeated squaring of the lazy chain, optima from
//! enumerating deterministic policies, end components from a naive
//! closure-based fixpoint.

#![allow(dead_code)]

use std::collections::BTreeMap;

use effsynth::model::{ActionId, Choice, Mdp, ProductMdp, StateId, StationaryPolicy, UtilityFn, UtilityKind};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MASS_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mdp_from(choices: Vec<Vec<Choice>>, n_actions: usize) -> Mdp {
    let n = choices.len();
    Mdp {
        state_names: (0..n).map(|s| format!("s{s}")).collect(),
        action_names: (0..n_actions).map(|a| format!("a{a}")).collect(),
        prop_names: Vec::new(),
        initial: 0,
        choices,
        labels: vec![Vec::new(); n],
    }
}

/// Random distribution over the given distinct targets, weights bounded
/// away from zero.
pub fn random_dist(rng: &mut ChaCha8Rng, targets: &[StateId]) -> Vec<(StateId, f64)> {
    let w: Vec<f64> = targets.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = w.iter().sum();
    let mut out: Vec<(StateId, f64)> = targets.iter().zip(&w).map(|(&t, x)| (t, x / sum)).collect();
    out.sort_by_key(|e| e.0);
    out
}

fn random_targets(rng: &mut ChaCha8Rng, pool: &[StateId], max: usize) -> Vec<StateId> {
    let k = rng.random_range(1..=max.min(pool.len()));
    let mut p = pool.to_vec();
    p.shuffle(rng);
    p.truncate(k);
    p
}

fn random_actions(rng: &mut ChaCha8Rng, max_actions: usize) -> Vec<ActionId> {
    let k = rng.random_range(1..=max_actions);
    let mut acts: Vec<ActionId> = (0..max_actions).collect();
    acts.shuffle(rng);
    acts.truncate(k);
    acts.sort_unstable();
    acts
}

fn random_choice(rng: &mut ChaCha8Rng, action: ActionId, pool: &[StateId]) -> Choice {
    let targets = random_targets(rng, pool, 3);
    Choice { action, succ: random_dist(rng, &targets) }
}

/// Arbitrary MDP: up to `max_actions` actions per state and up to three
/// successors per action.
pub fn random_mdp(rng: &mut ChaCha8Rng, n: usize, max_actions: usize) -> Mdp {
    let all: Vec<StateId> = (0..n).collect();
    let choices = (0..n)
        .map(|_| {
            random_actions(rng, max_actions)
                .into_iter()
                .map(|a| random_choice(rng, a, &all))
                .collect()
        })
        .collect();
    mdp_from(choices, max_actions)
}

/// Communicating MDP: a random Hamiltonian ring is woven into the first
/// action of each state.
pub fn random_communicating(rng: &mut ChaCha8Rng, n: usize, max_actions: usize) -> Mdp {
    let mut m = random_mdp(rng, n, max_actions);
    let mut order: Vec<StateId> = (0..n).collect();
    order.shuffle(rng);
    for i in 0..n {
        let (s, t) = (order[i], order[(i + 1) % n]);
        let ch = &mut m.choices[s][0];
        if !ch.succ.iter().any(|e| e.0 == t) {
            let mut targets: Vec<StateId> = ch.succ.iter().map(|e| e.0).collect();
            targets.push(t);
            ch.succ = random_dist(rng, &targets);
        }
    }
    assert!(oracle_communicating(&m));
    m
}

pub fn random_utilities(rng: &mut ChaCha8Rng, m: &Mdp) -> (UtilityFn, UtilityFn) {
    let r = UtilityFn::from_fn(m, UtilityKind::Reward, |_, _| rng.random_range(-1.0..5.0));
    let c = UtilityFn::from_fn(m, UtilityKind::Cost, |_, _| rng.random_range(0.5..3.0));
    (r, c)
}

/// Random randomized policy (some rows deterministic).
pub fn random_policy(rng: &mut ChaCha8Rng, m: &Mdp) -> StationaryPolicy {
    let probs = m
        .choices
        .iter()
        .map(|row| {
            let k = row.len();
            if rng.random_bool(0.3) {
                let mut r = vec![0.0; k];
                r[rng.random_range(0..k)] = 1.0;
                r
            } else {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            }
        })
        .collect();
    StationaryPolicy { probs }
}

/// One or two Rabin pairs with small bad sets and nonempty good sets.
pub fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Vec<StateId>, Vec<StateId>)> {
    let k = rng.random_range(1..=2);
    (0..k)
        .map(|_| {
            let bad: Vec<StateId> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
            let mut good: Vec<StateId> = (0..n).filter(|s| !bad.contains(s) && rng.random_bool(0.3)).collect();
            if good.is_empty() {
                good.push(rng.random_range(0..n));
            }
            (bad, good)
        })
        .collect()
}

/// Several small communicating islands plus transient states that feed
/// into them. One pair; every island has a good state with some chance.
pub fn random_multichain(rng: &mut ChaCha8Rng) -> ProductMdp {
    let islands = rng.random_range(2..=3);
    let sizes: Vec<usize> = (0..islands).map(|_| rng.random_range(1..=2)).collect();
    let n_trans = rng.random_range(1..=3);
    let n = n_trans + sizes.iter().sum::<usize>();
    let mut choices: Vec<Vec<Choice>> = Vec::with_capacity(n);
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let all: Vec<StateId> = (0..n).collect();
    for _ in 0..n_trans {
        let row = random_actions(rng, 2)
            .into_iter()
            .map(|a| random_choice(rng, a, &all))
            .collect();
        choices.push(row);
    }
    let mut start = n_trans;
    for &sz in &sizes {
        let members: Vec<StateId> = (start..start + sz).collect();
        for i in 0..sz {
            let next = members[(i + 1) % sz];
            let mut row = vec![Choice { action: 0, succ: random_dist(rng, &[next]) }];
            let second = if rng.random_bool(0.25) {
                random_targets(rng, &all, 2)
            } else {
                random_targets(rng, &members, 2)
            };
            if rng.random_bool(0.7) {
                row.push(Choice { action: 1, succ: random_dist(rng, &second) });
            }
            choices.push(row);
        }
        if rng.random_bool(0.85) {
            good.push(members[rng.random_range(0..sz)]);
        }
        if sz > 1 && rng.random_bool(0.2) {
            bad.push(members[0]);
        }
        start += sz;
    }
    if good.is_empty() {
        good.push(n - 1);
    }
    ProductMdp::from_parts(mdp_from(choices, 2), &[(bad, good)])
}

// ---------------------------------------------------------------------------
// Chains

/// Transition matrix of `m` under `p`, built directly from the choice rows.
pub fn policy_matrix(m: &Mdp, p: &StationaryPolicy) -> DMatrix<f64> {
    let n = m.n_states();
    let mut a = DMatrix::zeros(n, n);
    for s in 0..n {
        for (ci, ch) in m.choices[s].iter().enumerate() {
            for &(t, q) in &ch.succ {
                a[(s, t)] += p.probs[s][ci] * q;
            }
        }
    }
    a
}

/// Cesàro limit of `p` as the limit of powers of the aperiodic lazy chain
/// `(I + P) / 2`, by repeated squaring with row renormalization.
pub fn limit_matrix(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut l = (DMatrix::identity(n, n) + p) * 0.5;
    for _ in 0..72 {
        l = &l * &l;
        // Rounding in the row sums would otherwise double every squaring.
        for mut row in l.row_iter_mut() {
            let sum = row.sum();
            row /= sum;
        }
    }
    l
}

/// Recurrent classes read off the limit matrix, each sorted, ordered by
/// first state.
pub fn classes_from_limit(ps: &DMatrix<f64>) -> Vec<Vec<StateId>> {
    let n = ps.nrows();
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if assigned[s] || ps[(s, s)] <= MASS_TOL {
            continue;
        }
        let cls: Vec<StateId> = (0..n).filter(|&t| ps[(s, t)] > MASS_TOL).collect();
        cls.iter().for_each(|&t| assigned[t] = true);
        out.push(cls);
    }
    out
}

fn expected(p: &StationaryPolicy, u: &UtilityFn) -> Vec<f64> {
    p.probs.iter().zip(&u.values).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()
}

/// Per reachable class: (probability from the initial state, ratio).
pub fn oracle_class_ratios(m: &Mdp, p: &StationaryPolicy, r: &UtilityFn, c: &UtilityFn) -> Vec<(Vec<StateId>, f64, f64)> {
    let ps = limit_matrix(&policy_matrix(m, p));
    let (vr, vc) = (expected(p, r), expected(p, c));
    classes_from_limit(&ps)
        .into_iter()
        .map(|cls| {
            let rep = cls[0];
            let num: f64 = cls.iter().map(|&t| ps[(rep, t)] * vr[t]).sum();
            let den: f64 = cls.iter().map(|&t| ps[(rep, t)] * vc[t]).sum();
            let w: f64 = cls.iter().map(|&t| ps[(m.initial, t)]).sum();
            (cls, w, num / den)
        })
        .collect()
}

/// Long-run reward/cost ratio from the initial state.
pub fn oracle_efficiency(m: &Mdp, p: &StationaryPolicy, r: &UtilityFn, c: &UtilityFn) -> f64 {
    oracle_class_ratios(m, p, r, c).iter().map(|(_, w, x)| w * x).sum()
}

/// Long-run average of `u` from the initial state.
pub fn oracle_gain(m: &Mdp, p: &StationaryPolicy, u: &UtilityFn) -> f64 {
    let ps = limit_matrix(&policy_matrix(m, p));
    let v = expected(p, u);
    (0..m.n_states()).map(|t| ps[(m.initial, t)] * v[t]).sum()
}

/// Calls `f` with every deterministic choice vector of `m`.
pub fn for_each_deterministic(m: &Mdp, mut f: impl FnMut(&[usize])) {
    let n = m.n_states();
    let mut pick = vec![0usize; n];
    loop {
        f(&pick);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            pick[i] += 1;
            if pick[i] < m.choices[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Best efficiency from the initial state over deterministic policies.
pub fn brute_max_efficiency(m: &Mdp, r: &UtilityFn, c: &UtilityFn) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for_each_deterministic(m, |pick| {
        best = best.max(oracle_efficiency(m, &StationaryPolicy::deterministic(m, pick), r, c));
    });
    best
}

/// Best ratio of any recurrent class of any deterministic policy.
pub fn brute_max_class_ratio(m: &Mdp, r: &UtilityFn, c: &UtilityFn) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for_each_deterministic(m, |pick| {
        for (_, _, x) in oracle_class_ratios(m, &StationaryPolicy::deterministic(m, pick), r, c) {
            best = best.max(x);
        }
    });
    best
}

// ---------------------------------------------------------------------------
// Graphs

pub fn oracle_communicating(m: &Mdp) -> bool {
    let n = m.n_states();
    let mut reach = vec![vec![false; n]; n];
    for s in 0..n {
        reach[s][s] = true;
        for ch in &m.choices[s] {
            for &(t, q) in &ch.succ {
                if q > 0.0 {
                    reach[s][t] = true;
                }
            }
        }
    }
    closure(&mut reach);
    reach.iter().all(|row| row.iter().all(|&x| x))
}

fn closure(reach: &mut [Vec<bool>]) {
    let n = reach.len();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ec {
    pub states: Vec<StateId>,
    pub act: BTreeMap<StateId, Vec<ActionId>>,
}

impl Ec {
    pub fn contains(&self, other: &Ec) -> bool {
        other.act.iter().all(|(s, a)| self.act.get(s).is_some_and(|mine| a.iter().all(|x| mine.contains(x))))
    }

    pub fn has_state(&self, s: StateId) -> bool {
        self.states.contains(&s)
    }
}

fn succs(m: &Mdp, s: StateId, a: ActionId) -> Vec<StateId> {
    let ch = m.choices[s].iter().find(|c| c.action == a).expect("action");
    ch.succ.iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect()
}

/// Maximal end components inside `allowed`, by iterating "drop actions
/// that leave their strongly connected component" to a fixpoint.
pub fn brute_mecs(m: &Mdp, allowed: &[bool]) -> Vec<Ec> {
    let n = m.n_states();
    let mut acts: Vec<Vec<ActionId>> = (0..n)
        .map(|s| if allowed[s] { m.choices[s].iter().map(|c| c.action).collect() } else { Vec::new() })
        .collect();
    loop {
        let alive: Vec<bool> = acts.iter().map(|a| !a.is_empty()).collect();
        let mut reach = vec![vec![false; n]; n];
        for s in 0..n {
            reach[s][s] = alive[s];
            for &a in &acts[s] {
                for t in succs(m, s, a) {
                    if alive[t] {
                        reach[s][t] = true;
                    }
                }
            }
        }
        closure(&mut reach);
        let same = |s: usize, t: usize| reach[s][t] && reach[t][s];
        let next: Vec<Vec<ActionId>> = (0..n)
            .map(|s| {
                acts[s]
                    .iter()
                    .copied()
                    .filter(|&a| succs(m, s, a).iter().all(|&t| alive[t] && same(s, t)))
                    .collect()
            })
            .collect();
        if next == acts {
            let mut done = vec![false; n];
            let mut out = Vec::new();
            for s in 0..n {
                if done[s] || acts[s].is_empty() {
                    continue;
                }
                let states: Vec<StateId> = (0..n).filter(|&t| !acts[t].is_empty() && same(s, t)).collect();
                states.iter().for_each(|&t| done[t] = true);
                let act = states.iter().map(|&t| (t, acts[t].clone())).collect();
                out.push(Ec { states, act });
            }
            out.sort();
            return out;
        }
        acts = next;
    }
}

/// Per pair: MECs avoiding B that touch G; then drop candidates strictly
/// inside another candidate.
pub fn brute_maecs(pm: &ProductMdp) -> Vec<Ec> {
    let mut cands: Vec<Ec> = Vec::new();
    for pair in &pm.pairs {
        let allowed: Vec<bool> = pair.bad.iter().map(|b| !b).collect();
        for ec in brute_mecs(&pm.mdp, &allowed) {
            if ec.states.iter().any(|&s| pair.good[s]) && !cands.contains(&ec) {
                cands.push(ec);
            }
        }
    }
    let mut out: Vec<Ec> = cands
        .iter()
        .filter(|a| !cands.iter().any(|b| b != *a && b.contains(a)))
        .cloned()
        .collect();
    out.sort();
    out
}

pub fn brute_amecs(pm: &ProductMdp) -> Vec<Ec> {
    let maecs = brute_maecs(pm);
    brute_mecs(&pm.mdp, &vec![true; pm.n_states()])
        .into_iter()
        .filter(|mec| maecs.iter().any(|ma| ma.states.iter().all(|s| mec.has_state(*s))))
        .collect()
}

/// States that reach `target` with probability one under some policy.
pub fn brute_as_reach(m: &Mdp, target: &[bool]) -> Vec<bool> {
    let n = m.n_states();
    let mut u = vec![true; n];
    loop {
        let mut r: Vec<bool> = (0..n).map(|s| target[s] && u[s]).collect();
        loop {
            let add: Vec<usize> = (0..n)
                .filter(|&s| {
                    u[s] && !r[s]
                        && m.choices[s].iter().any(|c| {
                            let ts = succs(m, s, c.action);
                            ts.iter().all(|&t| u[t]) && ts.iter().any(|&t| r[t])
                        })
                })
                .collect();
            if add.is_empty() {
                break;
            }
            add.into_iter().for_each(|s| r[s] = true);
        }
        if r == u {
            return u;
        }
        u = r;
    }
}

/// The sub-model on `ec` with only its actions, plus the state map.
pub fn sub_model(m: &Mdp, ec: &Ec) -> (Mdp, Vec<StateId>) {
    let local = |s: StateId| ec.states.iter().position(|&x| x == s).expect("closed");
    let choices = ec
        .states
        .iter()
        .map(|&s| {
            m.choices[s]
                .iter()
                .filter(|c| ec.act[&s].contains(&c.action))
                .map(|c| Choice { action: c.action, succ: c.succ.iter().map(|&(t, q)| (local(t), q)).collect() })
                .collect()
        })
        .collect();
    let mut sub = mdp_from(choices, m.n_actions());
    sub.action_names = m.action_names.clone();
    (sub, ec.states.clone())
}

pub fn sub_utility(u: &UtilityFn, m: &Mdp, ec: &Ec) -> UtilityFn {
    let values = ec
        .states
        .iter()
        .map(|&s| {
            m.choices[s]
                .iter()
                .zip(&u.values[s])
                .filter(|(c, _)| ec.act[&s].contains(&c.action))
                .map(|(_, &v)| v)
                .collect()
        })
        .collect();
    UtilityFn { kind: u.kind, values }
}

/// Best ratio achievable inside an end component.
pub fn brute_ec_value(m: &Mdp, ec: &Ec, r: &UtilityFn, c: &UtilityFn) -> f64 {
    let (sub, _) = sub_model(m, ec);
    brute_max_class_ratio(&sub, &sub_utility(r, m, ec), &sub_utility(c, m, ec))
}

/// Checks the acceptance certificate of `p` on `pm` with the oracles:
/// reachable classes absorb all mass, each lies in an accepting MEC, and
/// each meets some pair's good set while avoiding its bad set.
pub fn oracle_certificate(pm: &ProductMdp, p: &StationaryPolicy) -> Result<(), String> {
    let amecs = brute_amecs(pm);
    let ps = limit_matrix(&policy_matrix(pm, p));
    let mut total = 0.0;
    for cls in classes_from_limit(&ps) {
        let w: f64 = cls.iter().map(|&t| ps[(pm.initial, t)]).sum();
        if w <= MASS_TOL {
            continue;
        }
        total += w;
        if !amecs.iter().any(|ec| cls.iter().all(|&s| ec.has_state(s))) {
            return Err(format!("class {cls:?} outside every accepting MEC"));
        }
        let ok = pm.pairs.iter().any(|pr| cls.iter().any(|&s| pr.good[s]) && !cls.iter().any(|&s| pr.bad[s]));
        if !ok {
            return Err(format!("class {cls:?} satisfies no pair"));
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("absorption mass {total}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Markov chains

/// Random stochastic matrix, possibly multichain with transient states.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let all: Vec<StateId> = (0..n).collect();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let targets = if rng.random_bool(0.15) { vec![s] } else { random_targets(rng, &all, 3) };
        for (t, q) in random_dist(rng, &targets) {
            p[(s, t)] = q;
        }
    }
    p
}

/// An MDP with a single action whose chain is `p`.
pub fn chain_mdp(p: &DMatrix<f64>) -> Mdp {
    let n = p.nrows();
    let choices = (0..n)
        .map(|s| vec![Choice { action: 0, succ: (0..n).filter(|&t| p[(s, t)] > 0.0).map(|t| (t, p[(s, t)])).collect() }])
        .collect();
    mdp_from(choices, 1)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}
