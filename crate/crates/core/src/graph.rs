//! End components, accepting end components, almost-sure reachability and
//! attractor strategies.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActionId, Mdp, ProductMdp, Restriction, StateId, StationaryPolicy};

/// Strongly connected components of a digraph given by adjacency lists.
/// Each component is sorted; components come in reverse topological order.
pub(crate) fn sccs(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(adj.len(), 0);
    for _ in 0..adj.len() {
        g.add_node(());
    }
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            g.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect()
}

/// A state set with, per state, a nonempty subset of its actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubMdp {
    /// Sorted.
    pub states: Vec<StateId>,
    /// Sorted actions per state in `states`.
    pub act: BTreeMap<StateId, Vec<ActionId>>,
}

impl SubMdp {
    pub fn contains_state(&self, s: StateId) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    /// Containment in both states and actions.
    pub fn is_within(&self, other: &SubMdp) -> bool {
        self.act.iter().all(|(s, acts)| {
            other.act.get(s).is_some_and(|o| acts.iter().all(|a| o.binary_search(a).is_ok()))
        })
    }

    pub fn state_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        self.states.iter().for_each(|&s| m[s] = true);
        m
    }

    /// Closure: every kept action stays inside the state set.
    pub fn is_closed(&self, m: &Mdp) -> bool {
        self.act.iter().all(|(&s, acts)| {
            !acts.is_empty()
                && acts.iter().all(|&a| match m.choice_index(s, a) {
                    Some(ci) => m.choices[s][ci]
                        .succ
                        .iter()
                        .all(|&(t, p)| p <= 0.0 || self.contains_state(t)),
                    None => false,
                })
        })
    }

    /// The closed sub-model, with `initial` (or the first state) as start.
    pub fn restriction(&self, m: &Mdp, initial: Option<StateId>) -> Result<Restriction> {
        let keep: Vec<Vec<usize>> = self
            .states
            .iter()
            .map(|&s| {
                self.act[&s]
                    .iter()
                    .map(|&a| m.choice_index(s, a).expect("sub-MDP action unavailable"))
                    .collect()
            })
            .collect();
        m.restrict(&self.states, &keep, initial.unwrap_or(self.states[0]))
    }

    fn successors(&self, m: &Mdp, s: StateId) -> Vec<StateId> {
        let mut out: Vec<StateId> = self.act[&s]
            .iter()
            .flat_map(|&a| {
                let ci = m.choice_index(s, a).expect("sub-MDP action unavailable");
                m.choices[s][ci].succ.iter().filter(|e| e.1 > 0.0).map(|e| e.0)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A sub-MDP whose induced digraph is strongly connected.
///
/// `witness` is a closed walk through the induced digraph that starts and
/// ends at the smallest state and visits every state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndComponent {
    #[serde(flatten)]
    pub sub: SubMdp,
    pub witness: Vec<StateId>,
}

impl std::ops::Deref for EndComponent {
    type Target = SubMdp;
    fn deref(&self) -> &SubMdp {
        &self.sub
    }
}

impl EndComponent {
    fn new(m: &Mdp, sub: SubMdp) -> Self {
        let witness = covering_walk(m, &sub);
        EndComponent { sub, witness }
    }

    /// Re-checks closure and the strong-connectivity witness.
    pub fn verify(&self, m: &Mdp) -> bool {
        if !self.is_closed(m) || self.witness.first() != self.witness.last() {
            return false;
        }
        let mut seen = vec![false; m.n_states()];
        for w in self.witness.windows(2) {
            if !self.contains_state(w[0]) || !self.successors(m, w[0]).contains(&w[1]) {
                return false;
            }
        }
        self.witness.iter().for_each(|&s| seen[s] = true);
        self.states.iter().all(|&s| seen[s])
    }
}

/// Closed walk from the smallest state covering all states of `sub`.
fn covering_walk(m: &Mdp, sub: &SubMdp) -> Vec<StateId> {
    let root = sub.states[0];
    let adj: BTreeMap<StateId, Vec<StateId>> =
        sub.states.iter().map(|&s| (s, sub.successors(m, s))).collect();
    let mut visited: BTreeSet<StateId> = BTreeSet::from([root]);
    let mut walk = vec![root];
    let mut cur = root;
    while visited.len() < sub.states.len() {
        let path = bfs_path(&adj, cur, |v| !visited.contains(&v));
        cur = *path.last().unwrap();
        visited.extend(&path);
        walk.extend(path);
    }
    walk.extend(bfs_path(&adj, cur, |v| v == root));
    walk
}

/// Shortest nonempty path from `from` to a state satisfying `goal`,
/// excluding `from` itself.
fn bfs_path(
    adj: &BTreeMap<StateId, Vec<StateId>>,
    from: StateId,
    goal: impl Fn(StateId) -> bool,
) -> Vec<StateId> {
    let mut parent: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[&u] {
            if parent.contains_key(&v) {
                continue;
            }
            parent.insert(v, u);
            if goal(v) {
                let mut path = vec![v];
                let mut x = u;
                while x != from {
                    path.push(x);
                    x = parent[&x];
                }
                path.reverse();
                return path;
            }
            queue.push_back(v);
        }
    }
    panic!("end component is not strongly connected");
}

/// Maximal end components of `m`.
pub fn mec_decompose(m: &Mdp) -> Vec<EndComponent> {
    mec_decompose_within(m, &vec![true; m.n_states()])
}

/// Maximal end components of the sub-model on the states marked `allowed`.
pub fn mec_decompose_within(m: &Mdp, allowed: &[bool]) -> Vec<EndComponent> {
    let n = m.n_states();
    let mut alive: Vec<bool> = allowed.to_vec();
    let mut live_choice: Vec<Vec<bool>> =
        m.choices.iter().enumerate().map(|(s, row)| vec![allowed[s]; row.len()]).collect();
    let mut comp = vec![usize::MAX; n];
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !alive[s] {
                    return Vec::new();
                }
                let mut out = Vec::new();
                for (c, &live) in m.choices[s].iter().zip(&live_choice[s]) {
                    if live {
                        out.extend(c.succ.iter().filter(|e| e.1 > 0.0 && alive[e.0]).map(|e| e.0));
                    }
                }
                out
            })
            .collect();
        comp.iter_mut().for_each(|c| *c = usize::MAX);
        for (k, c) in sccs(&adj).into_iter().enumerate() {
            for s in c {
                comp[s] = k;
            }
        }
        let mut changed = false;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            for (c, live) in m.choices[s].iter().zip(live_choice[s].iter_mut()) {
                if *live
                    && c.succ.iter().any(|&(t, p)| p > 0.0 && (!alive[t] || comp[t] != comp[s]))
                {
                    *live = false;
                    changed = true;
                }
            }
            if !live_choice[s].iter().any(|&l| l) {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<StateId>> = BTreeMap::new();
    for s in (0..n).filter(|&s| alive[s]) {
        groups.entry(comp[s]).or_default().push(s);
    }
    let mut out: Vec<EndComponent> = groups
        .into_values()
        .map(|states| {
            let act = states
                .iter()
                .map(|&s| {
                    let acts = m.choices[s]
                        .iter()
                        .zip(&live_choice[s])
                        .filter(|(_, &l)| l)
                        .map(|(c, _)| c.action)
                        .collect();
                    (s, acts)
                })
                .collect();
            EndComponent::new(m, SubMdp { states, act })
        })
        .collect();
    out.sort_by_key(|ec| ec.states[0]);
    out
}

/// Maximal accepting end components of a product.
pub fn maec_decompose(pm: &ProductMdp) -> Vec<EndComponent> {
    let mut cands: Vec<EndComponent> = Vec::new();
    for pair in &pm.pairs {
        let allowed: Vec<bool> = pair.bad.iter().map(|b| !b).collect();
        for ec in mec_decompose_within(&pm.mdp, &allowed) {
            if ec.states.iter().any(|&s| pair.good[s]) && !cands.contains(&ec) {
                cands.push(ec);
            }
        }
    }
    let keep: Vec<bool> = (0..cands.len())
        .map(|i| !(0..cands.len()).any(|j| j != i && cands[i].is_within(&cands[j]) && cands[i] != cands[j]))
        .collect();
    let mut out: Vec<EndComponent> =
        cands.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
    out.sort_by(|a, b| a.states.cmp(&b.states));
    out
}

/// MECs containing at least one MAEC, with their full MEC action sets.
pub fn amec_filter(pm: &ProductMdp) -> Vec<EndComponent> {
    let maecs = maec_decompose(pm);
    mec_decompose(&pm.mdp)
        .into_iter()
        .filter(|mec| maecs.iter().any(|ma| ma.states.iter().all(|&s| mec.contains_state(s))))
        .collect()
}

/// States from which some policy reaches `target` with probability one.
pub fn almost_sure_reach(m: &Mdp, target: &[bool]) -> Vec<bool> {
    let n = m.n_states();
    let mut region = vec![true; n];
    loop {
        // Backward reachability to target using actions that stay in region.
        let mut reach = target.to_vec();
        for s in 0..n {
            reach[s] = reach[s] && region[s];
        }
        loop {
            let mut grew = false;
            for s in 0..n {
                if reach[s] || !region[s] {
                    continue;
                }
                let ok = m.choices[s].iter().any(|c| {
                    c.succ.iter().all(|&(t, p)| p <= 0.0 || region[t])
                        && c.succ.iter().any(|&(t, p)| p > 0.0 && reach[t])
                });
                if ok {
                    reach[s] = true;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if reach == region {
            return region;
        }
        region = reach;
    }
}

/// States from which the Rabin task can be satisfied with probability one.
pub fn almost_sure_region(pm: &ProductMdp) -> Vec<StateId> {
    let target = amec_target(pm, &amec_filter(pm));
    let reg = almost_sure_reach(&pm.mdp, &target);
    (0..pm.n_states()).filter(|&s| reg[s]).collect()
}

pub(crate) fn amec_target(pm: &ProductMdp, amecs: &[EndComponent]) -> Vec<bool> {
    let mut target = vec![false; pm.n_states()];
    for ec in amecs {
        ec.states.iter().for_each(|&s| target[s] = true);
    }
    target
}

/// Extends `p` off `target` by repeatedly committing the lowest state (then
/// lowest action) with positive one-step probability into the grown set.
pub fn attractor_policy(
    m: &Mdp,
    target: &[bool],
    p: &StationaryPolicy,
) -> Result<StationaryPolicy> {
    let n = m.n_states();
    let mut grown = target.to_vec();
    let mut out = p.clone();
    let mut left: Vec<StateId> = (0..n).filter(|&s| !target[s]).collect();
    while !left.is_empty() {
        let pick = left.iter().enumerate().find_map(|(k, &s)| {
            m.choices[s]
                .iter()
                .position(|c| c.succ.iter().any(|&(t, q)| q > 0.0 && grown[t]))
                .map(|ci| (k, s, ci))
        });
        match pick {
            Some((k, s, ci)) => {
                out.set_deterministic(s, ci);
                grown[s] = true;
                left.remove(k);
            }
            None => return Err(Error::Unreachable { states: left }),
        }
    }
    Ok(out)
}

/// Whether the whole state space forms a single MEC.
pub fn is_communicating(m: &Mdp) -> bool {
    let mecs = mec_decompose(m);
    mecs.len() == 1 && mecs[0].states.len() == m.n_states()
}
