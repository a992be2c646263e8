//! Ratio-objective program over occupation weights, linearized by the
//! Charnes–Cooper substitution `y = t * gamma`.

use super::simplex::{solve_lp, LpProblem};
use crate::chain::analyze;
use crate::error::{Error, Result};
use crate::graph::{attractor_policy, is_communicating};
use crate::model::{induce_chain, Mdp, StationaryPolicy, UtilityFn};

pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LfpSolution {
    /// Occupation weights aligned with `Mdp::choices`; they sum to one.
    pub gamma: Vec<Vec<f64>>,
    pub value: f64,
}

pub(crate) fn choice_offsets(m: &Mdp) -> Vec<usize> {
    let mut off = Vec::with_capacity(m.n_states() + 1);
    off.push(0);
    for row in &m.choices {
        off.push(off.last().unwrap() + row.len());
    }
    off
}

/// Flow-balance rows `sum_a z(u,a) - sum_{s,a} P(u|s,a) z(s,a) = 0`.
pub(crate) fn flow_rows(m: &Mdp, off: &[usize], shift: usize) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m.n_states()];
    for (s, row) in m.choices.iter().enumerate() {
        for (i, ch) in row.iter().enumerate() {
            let k = shift + off[s] + i;
            rows[s].push((k, 1.0));
            for &(t, p) in &ch.succ {
                rows[t].push((k, -p));
            }
        }
    }
    rows
}

fn unflatten(m: &Mdp, off: &[usize], x: &[f64]) -> Vec<Vec<f64>> {
    m.choices.iter().enumerate().map(|(s, row)| x[off[s]..off[s] + row.len()].to_vec()).collect()
}

/// Maximizes the long-run reward/cost ratio of a communicating MDP.
pub fn solve_ratio_lfp(m: &Mdp, r: &UtilityFn, c: &UtilityFn) -> Result<LfpSolution> {
    r.validate(m)?;
    c.validate(m)?;
    if !is_communicating(m) {
        return Err(Error::NotCommunicating);
    }
    solve_ratio_lfp_unchecked(m, r, c)
}

/// As [`solve_ratio_lfp`] without the communicating check; used on end
/// components, which are communicating by construction.
pub(crate) fn solve_ratio_lfp_unchecked(m: &Mdp, r: &UtilityFn, c: &UtilityFn) -> Result<LfpSolution> {
    let off = choice_offsets(m);
    let k = off[m.n_states()];
    let t = k;
    let mut lp = LpProblem::new(k + 1);
    for (s, row) in r.values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            lp.objective[off[s] + i] = *v;
        }
    }
    for row in flow_rows(m, &off, 0) {
        lp.add_row(row, 0.0);
    }
    let cost_row = c
        .values
        .iter()
        .enumerate()
        .flat_map(|(s, row)| row.iter().enumerate().map(move |(i, v)| (s, i, *v)))
        .map(|(s, i, v)| (off[s] + i, v))
        .collect();
    lp.add_row(cost_row, 1.0);
    let mut mass: Vec<(usize, f64)> = (0..k).map(|j| (j, 1.0)).collect();
    mass.push((t, -1.0));
    lp.add_row(mass, 0.0);

    let sol = solve_lp(&lp)?;
    let scale = sol.x[t];
    if !(scale > 0.0) {
        return Err(Error::NumericalFailure("Charnes-Cooper scale vanished".into()));
    }
    let gamma: Vec<f64> = sol.x[..k].iter().map(|y| y / scale).collect();
    let gamma = unflatten(m, &off, &gamma);
    let num: f64 = gamma.iter().flatten().zip(r.values.iter().flatten()).map(|(g, v)| g * v).sum();
    let den: f64 = gamma.iter().flatten().zip(c.values.iter().flatten()).map(|(g, v)| g * v).sum();
    Ok(LfpSolution { gamma, value: num / den })
}

pub fn decode_ratio_policy(m: &Mdp, sol: &LfpSolution) -> Result<StationaryPolicy> {
    decode_ratio_policy_with(m, sol, SUPPORT_TOL, crate::chain::EDGE_TOL)
}

/// Normalizes occupation weights on their support, steers every other state
/// into the support, and keeps a single recurrent class.
pub fn decode_ratio_policy_with(
    m: &Mdp,
    sol: &LfpSolution,
    support_tol: f64,
    edge_tol: f64,
) -> Result<StationaryPolicy> {
    let mut p = StationaryPolicy::uniform(m);
    let mut q = vec![false; m.n_states()];
    for (s, g) in sol.gamma.iter().enumerate() {
        let mass: f64 = g.iter().filter(|&&x| x > support_tol).sum();
        if mass > support_tol {
            q[s] = true;
            p.probs[s] = g.iter().map(|&x| if x > support_tol { x / mass } else { 0.0 }).collect();
        }
    }
    if !q.iter().any(|&b| b) {
        return Err(Error::DegenerateDecoding { state: m.initial });
    }
    let mut p = attractor_policy(m, &q, &p)?;
    let ca = crate::chain::analyze_with(&induce_chain(m, &p)?, edge_tol)?;
    if !ca.is_unichain() {
        let mut keep = vec![false; m.n_states()];
        for &s in &ca.recurrent_classes[0] {
            keep[s] = true;
        }
        p = attractor_policy(m, &keep, &p)?;
    }
    Ok(p)
}

/// Efficiency of `p` from the initial state; convenience for callers that
/// only need the number.
pub fn policy_efficiency(m: &Mdp, p: &StationaryPolicy, r: &UtilityFn, c: &UtilityFn) -> Result<f64> {
    let ca = analyze(&induce_chain(m, p)?)?;
    Ok(crate::chain::efficiency(&ca, r, c, p, m.initial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Choice, UtilityKind};

    fn one_state_two_loops() -> Mdp {
        Mdp {
            state_names: vec!["s".into()],
            action_names: vec!["a".into(), "b".into()],
            prop_names: vec![],
            initial: 0,
            choices: vec![vec![
                Choice { action: 0, succ: vec![(0, 1.0)] },
                Choice { action: 1, succ: vec![(0, 1.0)] },
            ]],
            labels: vec![vec![]],
        }
    }

    #[test]
    fn picks_better_loop() {
        let m = one_state_two_loops();
        let r = UtilityFn { kind: UtilityKind::Reward, values: vec![vec![2.0, 5.0]] };
        let c = UtilityFn::constant(&m, UtilityKind::Cost, 1.0);
        let sol = solve_ratio_lfp(&m, &r, &c).unwrap();
        assert!((sol.value - 5.0).abs() < 1e-12);
        assert!(sol.gamma[0][1] > 0.999);
        let p = decode_ratio_policy(&m, &sol).unwrap();
        assert_eq!(p.probs[0], vec![0.0, 1.0]);
    }

    #[test]
    fn split_gamma_decodes_to_half() {
        let m = one_state_two_loops();
        let sol = LfpSolution { gamma: vec![vec![0.5, 0.5]], value: 0.0 };
        assert_eq!(decode_ratio_policy(&m, &sol).unwrap().probs[0], vec![0.5, 0.5]);
    }

    #[test]
    fn non_communicating_refused() {
        let m = crate::model::tests::example1();
        let r = UtilityFn::constant(&m, UtilityKind::Reward, 1.0);
        let c = UtilityFn::constant(&m, UtilityKind::Cost, 1.0);
        assert!(matches!(solve_ratio_lfp(&m, &r, &c), Err(Error::NotCommunicating)));
    }
}
