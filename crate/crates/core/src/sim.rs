//! Seeded Monte-Carlo rollouts.
//!
//! Rollout `k` draws from a ChaCha8 generator seeded with `seed` on stream
//! `k`, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Mdp, ProductMdp, StateId, StationaryPolicy, UtilityFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RolloutConfig {
    pub steps: u64,
    pub rollouts: usize,
    pub seed: u64,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.rollouts == 0 {
            return Err(Error::Param("steps and rollouts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutStats {
    pub mean_ratio: f64,
    /// Standard error of the mean over rollouts (zero for a single rollout).
    pub stderr: f64,
    /// Final-step reward/cost ratio of each rollout.
    pub ratios: Vec<f64>,
    /// Time-averaged state occupancy, averaged over rollouts.
    pub visit_freq: Vec<f64>,
    /// Fraction of time spent in states carrying each proposition.
    pub label_freq: Vec<f64>,
}

/// Visits to one pair's sets, summed over rollouts. The `late_` counts only
/// cover the second half of each horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairVisits {
    pub good: u64,
    pub bad: u64,
    pub good_late: u64,
    pub bad_late: u64,
}

struct Sampler<'a> {
    m: &'a Mdp,
    p: &'a StationaryPolicy,
}

impl Sampler<'_> {
    fn pick(weights: impl Iterator<Item = f64>, u: f64) -> Option<usize> {
        let mut acc = 0.0;
        let mut last = None;
        for (i, w) in weights.enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(i);
            if u < acc {
                return last;
            }
        }
        last
    }

    /// One transition: (choice index, next state).
    fn step(&self, s: StateId, rng: &mut ChaCha8Rng) -> (usize, StateId) {
        let ci = Self::pick(self.p.probs[s].iter().copied(), rng.random::<f64>()).expect("policy row has no mass");
        let succ = &self.m.choices[s][ci].succ;
        let k = Self::pick(succ.iter().map(|e| e.1), rng.random::<f64>()).expect("choice has no successor");
        (ci, succ[k].0)
    }
}

fn rng_for(seed: u64, rollout: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rollout as u64);
    rng
}

pub fn simulate(
    m: &Mdp,
    p: &StationaryPolicy,
    r: &UtilityFn,
    c: &UtilityFn,
    cfg: &RolloutConfig,
) -> Result<RolloutStats> {
    cfg.validate()?;
    p.validate(m)?;
    r.validate(m)?;
    c.validate(m)?;
    let sampler = Sampler { m, p };
    let n = m.n_states();
    let runs: Vec<(f64, Vec<u64>)> = (0..cfg.rollouts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(cfg.seed, k);
            let mut visits = vec![0u64; n];
            let (mut num, mut den) = (0.0, 0.0);
            let mut s = m.initial;
            for _ in 0..cfg.steps {
                visits[s] += 1;
                let (ci, t) = sampler.step(s, &mut rng);
                num += r.values[s][ci];
                den += c.values[s][ci];
                s = t;
            }
            (num / den, visits)
        })
        .collect();
    let ratios: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let k = ratios.len() as f64;
    let mean_ratio = ratios.iter().sum::<f64>() / k;
    let stderr = if ratios.len() > 1 {
        let var = ratios.iter().map(|x| (x - mean_ratio).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let mut visit_freq = vec![0.0; n];
    for (_, v) in &runs {
        for (f, &cnt) in visit_freq.iter_mut().zip(v) {
            *f += cnt as f64 / cfg.steps as f64 / k;
        }
    }
    let label_freq = (0..m.prop_names.len())
        .map(|q| (0..n).filter(|&s| m.has_label(s, q)).map(|s| visit_freq[s]).sum())
        .collect();
    Ok(RolloutStats { mean_ratio, stderr, ratios, visit_freq, label_freq })
}

/// Counts visits to each pair's good and bad sets along rollouts.
pub fn acceptance_visits(pm: &ProductMdp, p: &StationaryPolicy, cfg: &RolloutConfig) -> Result<Vec<PairVisits>> {
    cfg.validate()?;
    p.validate(pm)?;
    let sampler = Sampler { m: pm, p };
    let half = cfg.steps / 2;
    let per_run: Vec<Vec<PairVisits>> = (0..cfg.rollouts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(cfg.seed, k);
            let mut out = vec![PairVisits { good: 0, bad: 0, good_late: 0, bad_late: 0 }; pm.pairs.len()];
            let mut s = pm.initial;
            for t in 0..cfg.steps {
                for (v, pair) in out.iter_mut().zip(&pm.pairs) {
                    if pair.good[s] {
                        v.good += 1;
                        v.good_late += u64::from(t >= half);
                    }
                    if pair.bad[s] {
                        v.bad += 1;
                        v.bad_late += u64::from(t >= half);
                    }
                }
                s = sampler.step(s, &mut rng).1;
            }
            out
        })
        .collect();
    let mut total = vec![PairVisits { good: 0, bad: 0, good_late: 0, bad_late: 0 }; pm.pairs.len()];
    for run in per_run {
        for (t, v) in total.iter_mut().zip(run) {
            t.good += v.good;
            t.bad += v.bad;
            t.good_late += v.good_late;
            t.bad_late += v.bad_late;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Choice, UtilityKind};

    fn loop_mdp() -> Mdp {
        Mdp {
            state_names: vec!["s".into()],
            action_names: vec!["a".into()],
            prop_names: vec!["p".into()],
            initial: 0,
            choices: vec![vec![Choice { action: 0, succ: vec![(0, 1.0)] }]],
            labels: vec![vec![0]],
        }
    }

    #[test]
    fn deterministic_loop_ratio() {
        let m = loop_mdp();
        let p = StationaryPolicy::uniform(&m);
        let r = UtilityFn::constant(&m, UtilityKind::Reward, 2.0);
        let c = UtilityFn::constant(&m, UtilityKind::Cost, 4.0);
        let st = simulate(&m, &p, &r, &c, &RolloutConfig { steps: 100, rollouts: 3, seed: 1 }).unwrap();
        assert_eq!(st.mean_ratio, 0.5);
        assert_eq!(st.stderr, 0.0);
        assert_eq!(st.visit_freq, vec![1.0]);
        assert_eq!(st.label_freq, vec![1.0]);
    }

    #[test]
    fn zero_rollouts_rejected() {
        let m = loop_mdp();
        let p = StationaryPolicy::uniform(&m);
        let r = UtilityFn::constant(&m, UtilityKind::Reward, 2.0);
        let cfg = RolloutConfig { steps: 10, rollouts: 0, seed: 1 };
        assert!(simulate(&m, &p, &r, &r.clone(), &cfg).is_err());
    }
}
