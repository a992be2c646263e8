//! Multichain average-reward program over stationary (`x`) and transient
//! (`y`) occupation variables.

use super::ratio::{choice_offsets, flow_rows, SUPPORT_TOL};
use super::simplex::{solve_lp, LpProblem};
use crate::error::{Error, Result};
use crate::model::{Mdp, StationaryPolicy, UtilityFn};

#[derive(Debug, Clone)]
pub struct AvgLpSolution {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Optimal objective: the average reward weighted by the uniform
    /// initial distribution over states.
    pub gain: f64,
}

pub fn solve_avg_reward_lp(m: &Mdp, reward: &UtilityFn) -> Result<AvgLpSolution> {
    reward.validate(m)?;
    let n = m.n_states();
    let off = choice_offsets(m);
    let k = off[n];
    let mut lp = LpProblem::new(2 * k);
    for (s, row) in reward.values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            lp.objective[off[s] + i] = *v;
        }
    }
    for row in flow_rows(m, &off, 0) {
        lp.add_row(row, 0.0);
    }
    let alpha = 1.0 / n as f64;
    let ys = flow_rows(m, &off, k);
    for (s, mut row) in ys.into_iter().enumerate() {
        row.extend((off[s]..off[s + 1]).map(|j| (j, 1.0)));
        lp.add_row(row, alpha);
    }
    let sol = solve_lp(&lp)?;
    let split = |base: usize| -> Vec<Vec<f64>> {
        m.choices
            .iter()
            .enumerate()
            .map(|(s, row)| sol.x[base + off[s]..base + off[s] + row.len()].to_vec())
            .collect()
    };
    Ok(AvgLpSolution { x: split(0), y: split(k), gain: sol.value })
}

pub fn decode_avg_policy(m: &Mdp, sol: &AvgLpSolution) -> Result<StationaryPolicy> {
    decode_avg_policy_with(m, sol, SUPPORT_TOL)
}

pub fn decode_avg_policy_with(m: &Mdp, sol: &AvgLpSolution, support_tol: f64) -> Result<StationaryPolicy> {
    let normalize = |row: &[f64]| -> Option<Vec<f64>> {
        let mass: f64 = row.iter().filter(|&&v| v > support_tol).sum();
        (mass > support_tol).then(|| row.iter().map(|&v| if v > support_tol { v / mass } else { 0.0 }).collect())
    };
    let mut probs = Vec::with_capacity(m.n_states());
    for s in 0..m.n_states() {
        let row = normalize(&sol.x[s])
            .or_else(|| normalize(&sol.y[s]))
            .ok_or(Error::DegenerateDecoding { state: s })?;
        probs.push(row);
    }
    Ok(StationaryPolicy { probs })
}
