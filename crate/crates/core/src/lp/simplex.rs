//! Dense two-phase primal simplex on equality-form programs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const EPS_PIVOT: f64 = 1e-9;
const EPS_COST: f64 = 1e-9;
const FLUSH: f64 = 1e-13;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 32;
/// Primal feasibility slack of the Harris ratio test.
const HARRIS: f64 = 1e-9;
/// Pivots between drift checks of the basic solution.
const REINVERT: usize = 100;
/// Relative size of the anti-degeneracy shift.
const PERTURB: f64 = 1e-7;
/// Relative residual of the basic solution that triggers a rebuild.
const DRIFT_TOL: f64 = 1e-10;

/// maximize `objective . x` subject to `rows x = rhs`, `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    /// Sparse rows as (variable, coefficient); repeated variables add up.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_vars: usize) -> Self {
        LpProblem { n_vars, objective: vec![0.0; n_vars], rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(coeffs);
        self.rhs.push(rhs);
    }

    fn check(&self) -> Result<()> {
        if self.objective.len() != self.n_vars || self.rows.len() != self.rhs.len() {
            return Err(Error::Param("inconsistent program dimensions".into()));
        }
        if self.rows.iter().flatten().any(|&(j, v)| j >= self.n_vars || !v.is_finite())
            || self.rhs.iter().chain(&self.objective).any(|v| !v.is_finite())
        {
            return Err(Error::Param("malformed program coefficients".into()));
        }
        Ok(())
    }

    /// Max-norm of `rows x - rhs`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

struct Tableau {
    width: usize,
    t: Vec<f64>,
    /// The rows as originally given, used to rebuild `t` from the basis.
    orig: Vec<f64>,
    costs: Vec<f64>,
    /// Reduced costs, with the negated objective in the last column.
    d: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(width: usize, orig: Vec<f64>, basis: Vec<usize>) -> Self {
        Tableau { width, t: orig.clone(), orig, costs: Vec::new(), d: Vec::new(), basis }
    }

    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let pv = self.t[r * w + j];
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].iter().map(|x| x / pv).collect();
        let nz: Vec<usize> = (0..w).filter(|&k| prow[k] != 0.0).collect();
        self.t[r * w..(r + 1) * w].copy_from_slice(&prow);
        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for &k in &nz {
                let v = row[k] - f * prow[k];
                row[k] = if v.abs() < FLUSH { 0.0 } else { v };
            }
            row[j] = 0.0;
            // Harris steps may overshoot by up to the ratio tolerance.
            if row[w - 1] < 0.0 {
                row[w - 1] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for &k in &nz {
                self.d[k] -= f * prow[k];
            }
            self.d[j] = 0.0;
        }
        self.basis[r] = j;
    }

    /// Rebuilds the tableau as `B^-1 [A | b]` from the original rows so
    /// rounding errors do not pile up across pivots. Returns the smallest
    /// basic value before clamping, or `None` if the basis could not be
    /// factored.
    fn reinvert(&mut self) -> Option<f64> {
        let (m, w) = (self.rows(), self.width);
        if m == 0 {
            return Some(0.0);
        }
        let mut b = DMatrix::zeros(m, m);
        for i in 0..m {
            for (k, &col) in self.basis.iter().enumerate() {
                b[(i, k)] = self.orig[i * w + col];
            }
        }
        let full = DMatrix::from_row_slice(m, w, &self.orig);
        let sol = b.lu().solve(&full)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut min = f64::INFINITY;
        for i in 0..m {
            min = min.min(sol[(i, w - 1)]);
            for k in 0..w {
                let v = sol[(i, k)];
                self.t[i * w + k] = if v.abs() < FLUSH { 0.0 } else { v };
            }
            if self.t[i * w + w - 1] < 0.0 {
                self.t[i * w + w - 1] = 0.0;
            }
        }
        for (i, &col) in self.basis.iter().enumerate() {
            for k in 0..m {
                self.t[k * w + col] = if k == i { 1.0 } else { 0.0 };
            }
        }
        let c = std::mem::take(&mut self.costs);
        self.set_costs(c);
        Some(min)
    }

    /// Optimizes with the basic values shifted by small distinct amounts,
    /// which breaks the heavy degeneracy of flow-balance programs. The
    /// shift is then removed; the final basis is kept if it is still
    /// primal feasible, otherwise the unshifted problem is solved from the
    /// starting basis.
    fn optimize_perturbed(&mut self, allowed: usize, max_iter: usize) -> Result<()> {
        let (m, w) = (self.rows(), self.width);
        let start = (self.t.clone(), self.basis.clone(), self.d.clone());
        let saved: Vec<f64> = (0..m).map(|i| self.orig[i * w + w - 1]).collect();
        let scale = 1.0 + saved.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let eps: Vec<f64> = (0..m).map(|k| PERTURB * scale * (1.0 + ((k * 7919) % 1009) as f64 / 1009.0)).collect();
        for i in 0..m {
            let shift: f64 = self.basis.iter().zip(&eps).map(|(&col, e)| self.orig[i * w + col] * e).sum();
            self.orig[i * w + w - 1] += shift;
            self.t[i * w + w - 1] += eps[i];
        }
        let c = std::mem::take(&mut self.costs);
        self.set_costs(c);
        let run = self.optimize(allowed, max_iter);
        for (i, b) in saved.into_iter().enumerate() {
            self.orig[i * w + w - 1] = b;
        }
        match run {
            Err(Error::Unbounded) => return Err(Error::Unbounded),
            Ok(()) => {
                if self.reinvert().is_some_and(|min| min >= -1e-9 * scale) {
                    return Ok(());
                }
            }
            Err(_) => {}
        }
        (self.t, self.basis, self.d) = start;
        self.optimize(allowed, max_iter)
    }

    /// Max-norm of `B x_B - b` relative to `1 + |b|`, against the original rows.
    fn drift(&self) -> f64 {
        let (m, w) = (self.rows(), self.width);
        let mut worst = 0.0f64;
        for i in 0..m {
            let row = &self.orig[i * w..(i + 1) * w];
            let lhs: f64 = self.basis.iter().enumerate().map(|(k, &col)| row[col] * self.rhs(k)).sum();
            worst = worst.max((lhs - row[w - 1]).abs() / (1.0 + row[w - 1].abs()));
        }
        worst
    }

    /// Leaving row for entering column `j`. Bland mode takes the exact
    /// minimum ratio with ties to the smallest basic index; otherwise a
    /// two-pass Harris test prefers the largest pivot among near-minimal
    /// ratios.
    fn leaving(&self, j: usize, bland: bool) -> Option<(usize, f64)> {
        let cand = (0..self.rows()).filter_map(|i| {
            let a = self.at(i, j);
            (a > EPS_PIVOT).then(|| (i, a, self.rhs(i).max(0.0)))
        });
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for (i, a, b) in cand {
                let ratio = b / a;
                best = match best {
                    Some((li, lr)) => {
                        let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                        if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                    None => Some((i, ratio)),
                };
            }
            return best;
        }
        let bound = cand.clone().map(|(_, a, b)| (b + HARRIS) / a).fold(f64::INFINITY, f64::min);
        cand.filter(|&(_, a, b)| b / a <= bound)
            .max_by(|x, y| x.1.total_cmp(&y.1).then(self.basis[y.0].cmp(&self.basis[x.0])))
            .map(|(i, a, b)| (i, b / a))
    }

    /// Runs simplex iterations over columns `< allowed`.
    fn optimize(&mut self, allowed: usize, max_iter: usize) -> Result<()> {
        let mut degenerate = 0usize;
        for it in 1..=max_iter {
            if it % REINVERT == 0 && self.drift() > DRIFT_TOL {
                let _ = self.reinvert();
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                (0..allowed).find(|&j| self.d[j] > EPS_COST)
            } else {
                (0..allowed)
                    .filter(|&j| self.d[j] > EPS_COST)
                    .max_by(|&a, &b| self.d[a].total_cmp(&self.d[b]).then(b.cmp(&a)))
            };
            let Some(j) = entering else { return Ok(()) };
            let Some((r, ratio)) = self.leaving(j, bland) else { return Err(Error::Unbounded) };
            degenerate = if ratio <= 1e-12 { degenerate + 1 } else { 0 };
            self.pivot(r, j);
        }
        Err(Error::NumericalFailure("simplex iteration limit reached".into()))
    }

    fn set_costs(&mut self, c: Vec<f64>) {
        let w = self.width;
        self.d = vec![0.0; w];
        self.d[..c.len()].copy_from_slice(&c);
        for i in 0..self.rows() {
            let cb = c.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            for k in 0..w {
                self.d[k] -= cb * self.t[i * w + k];
            }
        }
        for &b in &self.basis {
            if b < w - 1 {
                self.d[b] = 0.0;
            }
        }
        self.costs = c;
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.check()?;
    let n = p.n_vars;
    let m = p.rows.len();
    let max_iter = 50_000 + 50 * (n + m);
    let sign: Vec<f64> = p.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();

    // Phase 1 with one artificial per row.
    let w1 = n + m + 1;
    let mut orig = vec![0.0; m * w1];
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, v) in row {
            orig[i * w1 + j] += sign[i] * v;
        }
        orig[i * w1 + n + i] = 1.0;
        orig[i * w1 + w1 - 1] = sign[i] * p.rhs[i];
    }
    let mut tab = Tableau::new(w1, orig, (n..n + m).collect());
    let mut c1 = vec![0.0; n + m];
    c1[n..].iter_mut().for_each(|x| *x = -1.0);
    tab.set_costs(c1);
    tab.optimize_perturbed(n + m, max_iter)?;
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs(i)).sum();
    let scale = 1.0 + p.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeas > 1e-7 * scale {
        return Err(Error::Infeasible);
    }

    // Drive artificials out of the basis. Where that fails the artificial's
    // own constraint is redundant and is dropped together with that basis
    // position.
    let mut keep_pos = vec![true; m];
    let mut keep_row = vec![true; m];
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let best = (0..n)
            .filter(|&j| tab.at(i, j).abs() > EPS_PIVOT)
            .max_by(|&a, &b| tab.at(i, a).abs().total_cmp(&tab.at(i, b).abs()));
        match best {
            Some(j) => tab.pivot(i, j),
            None => {
                keep_pos[i] = false;
                keep_row[tab.basis[i] - n] = false;
            }
        }
    }
    let kept: Vec<usize> = (0..m).filter(|&i| keep_row[i]).collect();
    let basis2: Vec<usize> = (0..m).filter(|&i| keep_pos[i]).map(|i| tab.basis[i]).collect();

    // Phase 2 on the original columns of the non-redundant rows.
    let w2 = n + 1;
    let mut orig2 = vec![0.0; kept.len() * w2];
    for (ni, &i) in kept.iter().enumerate() {
        orig2[ni * w2..ni * w2 + n].copy_from_slice(&tab.orig[i * w1..i * w1 + n]);
        orig2[ni * w2 + n] = tab.orig[i * w1 + w1 - 1];
    }
    let mut tab2 = Tableau::new(w2, orig2, basis2);
    drop(tab);
    tab2.costs = p.objective.clone();
    let _ = tab2.reinvert();
    tab2.optimize_perturbed(n, max_iter)?;

    let mut x = vec![0.0; n];
    for i in 0..tab2.rows() {
        x[tab2.basis[i]] = tab2.rhs(i).max(0.0);
    }
    if let Some(refined) = refine(p, &kept, &sign, &tab2.basis) {
        let tol = 1e-9 * scale;
        if p.residual(&refined) <= p.residual(&x).max(tol) {
            x = refined;
        }
    }
    let res = p.residual(&x);
    if !res.is_finite() || res > 1e-9 * scale {
        return Err(Error::NumericalFailure(format!("feasibility residual {res:e}")));
    }
    let value = x.iter().zip(&p.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, value })
}

/// Recomputes basic variables from the original rows by a direct solve.
fn refine(p: &LpProblem, kept: &[usize], sign: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let k = kept.len();
    if k == 0 {
        return Some(vec![0.0; p.n_vars]);
    }
    let col: std::collections::HashMap<usize, usize> =
        basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for (ri, &i) in kept.iter().enumerate() {
        for &(j, v) in &p.rows[i] {
            if let Some(&cj) = col.get(&j) {
                a[(ri, cj)] += sign[i] * v;
            }
        }
        b[ri] = sign[i] * p.rhs[i];
    }
    let xb = a.lu().solve(&b)?;
    let mut x = vec![0.0; p.n_vars];
    for (i, &bj) in basis.iter().enumerate() {
        let v = xb[i];
        if v < -1e-9 || !v.is_finite() {
            return None;
        }
        x[bj] = v.max(0.0);
    }
    Some(x)
}
