//! Markov chain analysis: recurrent classes, stationary distributions,
//! absorption probabilities, the limit matrix, potentials and deviations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::sccs;
use crate::model::{induce_chain, Mc, Mdp, StateId, StationaryPolicy, UtilityFn};

/// Edges with probability at or below this are ignored for classification.
pub const EDGE_TOL: f64 = 1e-12;
const SOLVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    pub chain: Mc,
    /// Bottom strongly connected components, each sorted, ordered by first state.
    pub recurrent_classes: Vec<Vec<StateId>>,
    pub transient: Vec<StateId>,
    pub class_of: Vec<Option<usize>>,
    /// Per class, the stationary distribution aligned with the class's states.
    pub stationary: Vec<Vec<f64>>,
    /// `absorb[(s, k)]`: probability of ending in class `k` from `s`.
    pub absorb: DMatrix<f64>,
    pub limit: DMatrix<f64>,
}

impl ChainAnalysis {
    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    /// Row of the limit matrix at `s`.
    pub fn limit_row(&self, s: StateId) -> Vec<f64> {
        self.limit.row(s).iter().copied().collect()
    }
}

pub fn analyze(chain: &Mc) -> Result<ChainAnalysis> {
    analyze_with(chain, EDGE_TOL)
}

fn lu_solve(a: DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::SingularSystem(what.to_string()))?;
    let res = (&a * &x - b).amax();
    if !res.is_finite() || res > SOLVE_TOL * (1.0 + b.amax()) {
        return Err(Error::SingularSystem(format!("{what}: residual {res:e}")));
    }
    Ok(x)
}

pub fn analyze_with(chain: &Mc, edge_tol: f64) -> Result<ChainAnalysis> {
    let p = &chain.p;
    let n = p.nrows();
    let adj: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| p[(i, j)] > edge_tol).collect()).collect();
    let comps = sccs(&adj);
    let mut comp_id = vec![0; n];
    for (k, c) in comps.iter().enumerate() {
        for &s in c {
            comp_id[s] = k;
        }
    }
    let mut classes: Vec<Vec<StateId>> = comps
        .iter()
        .enumerate()
        .filter(|(k, c)| c.iter().all(|&s| adj[s].iter().all(|&t| comp_id[t] == *k)))
        .map(|(_, c)| c.clone())
        .collect();
    classes.sort_by_key(|c| c[0]);
    let mut class_of = vec![None; n];
    for (k, c) in classes.iter().enumerate() {
        for &s in c {
            class_of[s] = Some(k);
        }
    }
    let transient: Vec<StateId> = (0..n).filter(|&s| class_of[s].is_none()).collect();

    let mut stationary = Vec::with_capacity(classes.len());
    for c in &classes {
        let r = c.len();
        let mut a = DMatrix::zeros(r, r);
        for (i, &si) in c.iter().enumerate() {
            for (j, &sj) in c.iter().enumerate() {
                a[(j, i)] = p[(si, sj)];
            }
            a[(i, i)] -= 1.0;
        }
        for j in 0..r {
            a[(r - 1, j)] = 1.0;
        }
        let mut b = DMatrix::zeros(r, 1);
        b[(r - 1, 0)] = 1.0;
        let x = lu_solve(a, &b, "stationary distribution")?;
        let pi: Vec<f64> = x.iter().map(|&v| if v < 0.0 && v > -SOLVE_TOL { 0.0 } else { v }).collect();
        if pi.iter().any(|&v| v < 0.0) {
            return Err(Error::SingularSystem("negative stationary mass".into()));
        }
        stationary.push(pi);
    }

    let k = classes.len();
    let mut absorb = DMatrix::zeros(n, k);
    for (ci, c) in classes.iter().enumerate() {
        for &s in c {
            absorb[(s, ci)] = 1.0;
        }
    }
    let t = transient.len();
    if t > 0 && k > 0 {
        let mut m = DMatrix::identity(t, t);
        for (i, &si) in transient.iter().enumerate() {
            for (j, &sj) in transient.iter().enumerate() {
                m[(i, j)] -= p[(si, sj)];
            }
        }
        let mut b = DMatrix::zeros(t, k);
        for (i, &si) in transient.iter().enumerate() {
            for (ci, c) in classes.iter().enumerate() {
                b[(i, ci)] = c.iter().map(|&sj| p[(si, sj)]).sum();
            }
        }
        let x = lu_solve(m, &b, "absorption probabilities")?;
        for (i, &si) in transient.iter().enumerate() {
            for ci in 0..k {
                absorb[(si, ci)] = x[(i, ci)].clamp(0.0, 1.0);
            }
        }
    }

    let mut limit = DMatrix::zeros(n, n);
    for s in 0..n {
        for (ci, c) in classes.iter().enumerate() {
            let w = absorb[(s, ci)];
            if w == 0.0 {
                continue;
            }
            for (j, &sj) in c.iter().enumerate() {
                limit[(s, sj)] = w * stationary[ci][j];
            }
        }
    }

    Ok(ChainAnalysis {
        chain: chain.clone(),
        recurrent_classes: classes,
        transient,
        class_of,
        stationary,
        absorb,
        limit,
    })
}

pub fn average_utility(ca: &ChainAnalysis, u: &UtilityFn, p: &StationaryPolicy, from: StateId) -> f64 {
    let v = p.utility_vector(u);
    ca.limit.row(from).iter().zip(&v).map(|(a, b)| a * b).sum()
}

/// Long-run reward-to-cost ratio of each recurrent class.
pub fn class_ratios(ca: &ChainAnalysis, r: &UtilityFn, c: &UtilityFn, p: &StationaryPolicy) -> Vec<f64> {
    let vr = p.utility_vector(r);
    let vc = p.utility_vector(c);
    ca.recurrent_classes
        .iter()
        .zip(&ca.stationary)
        .map(|(cls, pi)| {
            let num: f64 = cls.iter().zip(pi).map(|(&s, w)| w * vr[s]).sum();
            let den: f64 = cls.iter().zip(pi).map(|(&s, w)| w * vc[s]).sum();
            num / den
        })
        .collect()
}

pub fn efficiency(
    ca: &ChainAnalysis,
    r: &UtilityFn,
    c: &UtilityFn,
    p: &StationaryPolicy,
    from: StateId,
) -> f64 {
    class_ratios(ca, r, c, p)
        .iter()
        .enumerate()
        .map(|(k, ratio)| ca.absorb[(from, k)] * ratio)
        .sum()
}

#[derive(Debug, Clone)]
pub struct PotentialVector {
    pub g: Vec<f64>,
    /// Max-norm residual of `(I - P + P*) g = v`.
    pub residual: f64,
}

pub fn potential_vector(ca: &ChainAnalysis, u: &UtilityFn, p: &StationaryPolicy) -> Result<PotentialVector> {
    let v = p.utility_vector(u);
    let n = v.len();
    let a = DMatrix::identity(n, n) - &ca.chain.p + &ca.limit;
    let b = DMatrix::from_column_slice(n, 1, &v);
    let lu = a.clone().lu();
    let g = lu.solve(&b).ok_or_else(|| Error::SingularSystem("potential vector".into()))?;
    let residual = (&a * &g - &b).amax();
    if !residual.is_finite() || residual > 1e-8 * (1.0 + b.amax()) {
        return Err(Error::SingularSystem(format!("potential vector residual {residual:e}")));
    }
    Ok(PotentialVector { g: g.iter().copied().collect(), residual })
}

#[derive(Debug, Clone)]
pub struct DeviationVector {
    pub d: Vec<f64>,
}

/// `(v' - v) + (P' - P) g` for the ordered pair `(mu, mu_prime)`.
pub fn deviation_vector(
    m: &Mdp,
    mu: &StationaryPolicy,
    mu_prime: &StationaryPolicy,
    u: &UtilityFn,
) -> Result<DeviationVector> {
    let ch = induce_chain(m, mu)?;
    let ch2 = induce_chain(m, mu_prime)?;
    let ca = analyze(&ch)?;
    let g = DVector::from_vec(potential_vector(&ca, u, mu)?.g);
    let v = DVector::from_vec(mu.utility_vector(u));
    let v2 = DVector::from_vec(mu_prime.utility_vector(u));
    let d = (v2 - v) + (&ch2.p - &ch.p) * g;
    Ok(DeviationVector { d: d.iter().copied().collect() })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Both sides of the ratio perturbation identity
/// `J(mu_d) - J(mu) = delta / (pi_d . v_C(mu_d)) * pi_d . (D_R - J(mu) D_C)`
/// with `mu_d = (1 - delta) mu + delta mu'`.
pub fn ratio_perturbation_identity_check(
    m: &Mdp,
    mu: &StationaryPolicy,
    mu_prime: &StationaryPolicy,
    r: &UtilityFn,
    c: &UtilityFn,
    delta: f64,
) -> Result<(f64, f64)> {
    let ca = analyze(&induce_chain(m, mu)?)?;
    if !ca.is_unichain() {
        return Err(Error::NotUnichain { classes: ca.recurrent_classes.len() });
    }
    let mu_d = mu.mix(mu_prime, delta);
    let ca_d = analyze(&induce_chain(m, &mu_d)?)?;
    let j = efficiency(&ca, r, c, mu, m.initial);
    let j_d = efficiency(&ca_d, r, c, &mu_d, m.initial);
    let dr = deviation_vector(m, mu, mu_prime, r)?.d;
    let dc = deviation_vector(m, mu, mu_prime, c)?.d;
    let pi = ca_d.limit_row(m.initial);
    let denom = dot(&pi, &mu_d.utility_vector(c));
    let comb: Vec<f64> = dr.iter().zip(&dc).map(|(a, b)| a - j * b).collect();
    Ok((j_d - j, delta / denom * dot(&pi, &comb)))
}

/// Both sides of `W(mu_d) - W(mu) = delta * pi_d . D_V(mu, mu')`.
pub fn average_perturbation_identity_check(
    m: &Mdp,
    mu: &StationaryPolicy,
    mu_prime: &StationaryPolicy,
    u: &UtilityFn,
    delta: f64,
) -> Result<(f64, f64)> {
    let ca = analyze(&induce_chain(m, mu)?)?;
    if !ca.is_unichain() {
        return Err(Error::NotUnichain { classes: ca.recurrent_classes.len() });
    }
    let mu_d = mu.mix(mu_prime, delta);
    let ca_d = analyze(&induce_chain(m, &mu_d)?)?;
    let w = average_utility(&ca, u, mu, m.initial);
    let w_d = average_utility(&ca_d, u, &mu_d, m.initial);
    let d = deviation_vector(m, mu, mu_prime, u)?.d;
    Ok((w_d - w, delta * dot(&ca_d.limit_row(m.initial), &d)))
}
