//! Efficiency-optimal synthesis under Rabin acceptance.
//!
//! Communicating products: pick the best maximal accepting end component by
//! its ratio optimum, perturb that optimum toward the uniform policy so every
//! component state recurs, and steer everything else into the component.
//! General products: solve each accepting MEC that way, then choose which
//! ones to settle in with an average-reward program whose reward is the
//! per-component optimum (and a punitive constant elsewhere).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{analyze_with, average_utility, deviation_vector, efficiency, ChainAnalysis};
use crate::error::{Error, Result};
use crate::graph::{
    almost_sure_region, amec_filter, attractor_policy, is_communicating, maec_decompose, EndComponent, SubMdp,
};
use crate::lp::{decode_avg_policy_with, decode_ratio_policy_with, solve_avg_reward_lp, solve_ratio_lfp_unchecked};
use crate::model::{
    induce_chain, Mdp, ProductMdp, Restriction, StateId, StationaryPolicy, UtilityFn, UtilityKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Closed-form bound on the perturbation degree.
    #[default]
    Es,
    /// Bisection on the analytic efficiency.
    Ex,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Es => "es",
            Method::Ex => "ex",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "es" => Ok(Method::Es),
            "ex" => Ok(Method::Ex),
            _ => Err(Error::Param(format!("unknown method '{s}' (expected es or ex)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthOptions {
    pub method: Method,
    /// Occupation weights at or below this are treated as zero.
    pub support_tol: f64,
    /// Transition probabilities at or below this are ignored when
    /// classifying states.
    pub edge_tol: f64,
    pub bisection_width: f64,
    /// `K = -max|R| / min C - k_margin`.
    pub k_margin: f64,
    /// Skip perturbation when the ratio optimum already accepts.
    pub shortcut: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            method: Method::Es,
            support_tol: crate::lp::SUPPORT_TOL,
            edge_tol: crate::chain::EDGE_TOL,
            bisection_width: 1e-6,
            k_margin: 1.0,
            shortcut: true,
        }
    }
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.support_tol) || !pos(self.edge_tol) || !pos(self.k_margin) {
            return Err(Error::Param("tolerances and K margin must be positive".into()));
        }
        if !(pos(self.bisection_width) && self.bisection_width < 0.5) {
            return Err(Error::Param("bisection width must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Below this, the deviation bound is treated as zero.
const DEGENERATE_D: f64 = 1e-12;
const DELTA_CAP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone)]
pub struct PerturbationPlan {
    pub mu_opt: StationaryPolicy,
    pub mu_irr: StationaryPolicy,
    pub delta: f64,
    pub method: Method,
    pub d_inf: f64,
    pub c_min: f64,
    /// The deviation bound vanished: mixing costs nothing.
    pub degenerate: bool,
}

impl PerturbationPlan {
    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            method: self.method,
            delta: self.delta,
            d_inf: self.d_inf,
            c_min: self.c_min,
            degenerate: self.degenerate,
        }
    }

    pub fn perturbed(&self) -> StationaryPolicy {
        self.mu_opt.mix(&self.mu_irr, self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanSummary {
    pub method: Method,
    pub delta: f64,
    pub d_inf: f64,
    pub c_min: f64,
    pub degenerate: bool,
}

/// Uniform over the component's actions on its states; uniform over all
/// actions elsewhere.
pub fn uniform_irreducible_policy(m: &Mdp, ec: &SubMdp) -> StationaryPolicy {
    let mut p = StationaryPolicy::uniform(m);
    for &s in &ec.states {
        let acts = &ec.act[&s];
        let w = 1.0 / acts.len() as f64;
        for (i, ch) in m.choices[s].iter().enumerate() {
            p.probs[s][i] = if acts.binary_search(&ch.action).is_ok() { w } else { 0.0 };
        }
    }
    p
}

fn efficiency_of(m: &Mdp, p: &StationaryPolicy, r: &UtilityFn, c: &UtilityFn) -> Result<f64> {
    let ca = crate::chain::analyze(&induce_chain(m, p)?)?;
    Ok(efficiency(&ca, r, c, p, m.initial))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("epsilon must be strictly positive, got {epsilon}")))
    }
}

/// Perturbation degree from the closed-form bound `eps * c_min / D_inf`.
pub fn perturbation_degree_estimated(
    m: &Mdp,
    mu_opt: &StationaryPolicy,
    mu_irr: &StationaryPolicy,
    r: &UtilityFn,
    c: &UtilityFn,
    epsilon: f64,
) -> Result<PerturbationPlan> {
    check_epsilon(epsilon)?;
    let ca = crate::chain::analyze(&induce_chain(m, mu_opt)?)?;
    if !ca.is_unichain() {
        return Err(Error::NotUnichain { classes: ca.recurrent_classes.len() });
    }
    let j = efficiency(&ca, r, c, mu_opt, m.initial);
    let dr = deviation_vector(m, mu_opt, mu_irr, r)?.d;
    let dc = deviation_vector(m, mu_opt, mu_irr, c)?.d;
    let d_inf = dr.iter().zip(&dc).map(|(a, b)| (a - j * b).abs()).fold(0.0, f64::max);
    let c_min = c.min();
    let scale = 1.0 + r.max_abs() + j.abs() * c.max_abs();
    let (delta, degenerate) = if d_inf <= DEGENERATE_D * scale {
        (0.5, true)
    } else {
        ((epsilon * c_min / d_inf).min(DELTA_CAP), false)
    };
    Ok(PerturbationPlan {
        mu_opt: mu_opt.clone(),
        mu_irr: mu_irr.clone(),
        delta,
        method: Method::Es,
        d_inf,
        c_min,
        degenerate,
    })
}

/// Largest degree (to within `width`) whose mixture stays within `epsilon`
/// of the optimum, found by bisection above the closed-form degree.
pub fn perturbation_degree_exact(
    m: &Mdp,
    mu_opt: &StationaryPolicy,
    mu_irr: &StationaryPolicy,
    r: &UtilityFn,
    c: &UtilityFn,
    epsilon: f64,
    width: f64,
) -> Result<PerturbationPlan> {
    let est = perturbation_degree_estimated(m, mu_opt, mu_irr, r, c, epsilon)?;
    let j = efficiency_of(m, mu_opt, r, c)?;
    let ok = |d: f64| -> Result<bool> { Ok(efficiency_of(m, &mu_opt.mix(mu_irr, d), r, c)? >= j - epsilon) };
    let top = 1.0 - width;
    let mut lo = if est.degenerate { 0.0 } else { est.delta };
    if lo > 0.0 && !ok(lo)? {
        lo = 0.0;
    }
    let delta = if lo >= top {
        lo
    } else if ok(top)? {
        top
    } else {
        let mut hi = top;
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            if ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(PerturbationPlan { delta, method: Method::Ex, ..est })
}

pub fn perturbation_degree(
    m: &Mdp,
    mu_opt: &StationaryPolicy,
    mu_irr: &StationaryPolicy,
    r: &UtilityFn,
    c: &UtilityFn,
    epsilon: f64,
    opts: &SynthOptions,
) -> Result<PerturbationPlan> {
    match opts.method {
        Method::Es => perturbation_degree_estimated(m, mu_opt, mu_irr, r, c, epsilon),
        Method::Ex => perturbation_degree_exact(m, mu_opt, mu_irr, r, c, epsilon, opts.bisection_width),
    }
}

/// Ratio optimum of one maximal accepting end component.
#[derive(Debug, Clone)]
pub struct MaecSolution {
    pub ec: EndComponent,
    pub restriction: Restriction,
    pub r: UtilityFn,
    pub c: UtilityFn,
    pub value: f64,
    /// Decoded optimum on the restricted model.
    pub mu_opt: StationaryPolicy,
}

impl MaecSolution {
    pub fn mu_irr(&self) -> StationaryPolicy {
        StationaryPolicy::uniform(&self.restriction.mdp)
    }

    pub fn plan(&self, epsilon: f64, opts: &SynthOptions) -> Result<PerturbationPlan> {
        perturbation_degree(&self.restriction.mdp, &self.mu_opt, &self.mu_irr(), &self.r, &self.c, epsilon, opts)
    }
}

/// The epsilon-independent half of the communicating-case algorithm.
#[derive(Debug, Clone)]
pub struct CommunicatingPlan {
    pub pm: ProductMdp,
    pub maecs: Vec<MaecSolution>,
    /// Index of the best component (lowest index among ties).
    pub best: usize,
    /// The ratio optimum of the best component already accepts.
    pub no_perturbation: bool,
    pub opts: SynthOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaecReport {
    pub states: Vec<StateId>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub states: Vec<StateId>,
    pub value: f64,
    pub maecs: Vec<MaecReport>,
    pub chosen_maec: usize,
    pub no_perturbation: bool,
    /// Whether the final policy settles here.
    pub used: bool,
    pub plan: Option<PlanSummary>,
    /// Degree actually applied (zero when no perturbation is needed).
    pub delta: Option<f64>,
}

impl CommunicatingPlan {
    pub fn new(pm: ProductMdp, r: &UtilityFn, c: &UtilityFn, opts: &SynthOptions) -> Result<Self> {
        opts.validate()?;
        let ecs = maec_decompose(&pm);
        if ecs.is_empty() {
            return Err(Error::NoMaec);
        }
        let maecs = ecs
            .into_par_iter()
            .map(|ec| solve_maec(&pm, ec, r, c, opts))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, ms) in maecs.iter().enumerate() {
            if ms.value > maecs[best].value + 1e-12 * (1.0 + maecs[best].value.abs()) {
                best = i;
            }
        }
        let no_perturbation = opts.shortcut && optimum_accepts(&pm, &maecs[best], opts)?;
        Ok(CommunicatingPlan { pm, maecs, best, no_perturbation, opts: *opts })
    }

    pub fn value(&self) -> f64 {
        self.maecs[self.best].value
    }

    pub fn plan(&self, epsilon: f64, method: Method) -> Result<PerturbationPlan> {
        self.maecs[self.best].plan(epsilon, &SynthOptions { method, ..self.opts })
    }

    /// Policy on `self.pm` and the component summary for `epsilon`.
    pub fn finish(&self, epsilon: f64) -> Result<(StationaryPolicy, ComponentReport)> {
        self.finish_with(epsilon, self.opts.method)
    }

    pub fn finish_with(&self, epsilon: f64, method: Method) -> Result<(StationaryPolicy, ComponentReport)> {
        check_epsilon(epsilon)?;
        let ms = &self.maecs[self.best];
        let plan = self.plan(epsilon, method)?;
        let (local, delta) =
            if self.no_perturbation { (plan.mu_opt.clone(), 0.0) } else { (plan.perturbed(), plan.delta) };
        let mut p = StationaryPolicy::uniform(&self.pm);
        ms.restriction.lift_policy(&local, &mut p);
        let p = attractor_policy(&self.pm, &ms.ec.state_mask(self.pm.n_states()), &p)?;
        let report = ComponentReport {
            states: (0..self.pm.n_states()).collect(),
            value: self.value(),
            maecs: self
                .maecs
                .iter()
                .map(|m| MaecReport { states: m.ec.states.clone(), value: m.value })
                .collect(),
            chosen_maec: self.best,
            no_perturbation: self.no_perturbation,
            used: true,
            plan: Some(plan.summary()),
            delta: Some(delta),
        };
        Ok((p, report))
    }
}

fn solve_maec(
    pm: &ProductMdp,
    ec: EndComponent,
    r: &UtilityFn,
    c: &UtilityFn,
    opts: &SynthOptions,
) -> Result<MaecSolution> {
    let restriction = ec.restriction(pm, None)?;
    let (lr, lc) = (restriction.utility(r), restriction.utility(c));
    let sol = solve_ratio_lfp_unchecked(&restriction.mdp, &lr, &lc)?;
    let mu_opt = decode_ratio_policy_with(&restriction.mdp, &sol, opts.support_tol, opts.edge_tol)?;
    Ok(MaecSolution { ec, restriction, r: lr, c: lc, value: sol.value, mu_opt })
}

/// Whether the single recurrent class of the component's ratio optimum
/// already satisfies some pair.
fn optimum_accepts(pm: &ProductMdp, ms: &MaecSolution, opts: &SynthOptions) -> Result<bool> {
    let ca = analyze_with(&induce_chain(&ms.restriction.mdp, &ms.mu_opt)?, opts.edge_tol)?;
    Ok(ca.recurrent_classes.iter().all(|cls| {
        let parent: Vec<StateId> = cls.iter().map(|&s| ms.restriction.states[s]).collect();
        pm.accepting_pair(&parent).is_some()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCertificate {
    pub states: Vec<StateId>,
    /// Probability of eventually settling in this class from the initial state.
    pub probability: f64,
    /// A pair whose good set the class meets and whose bad set it avoids.
    pub pair: Option<usize>,
    /// Index of an accepting MEC containing the class.
    pub amec: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// Recurrent classes reachable from the initial state.
    pub classes: Vec<ClassCertificate>,
    /// Total probability of settling in some listed class.
    pub absorption: f64,
    /// Probability of settling in an accepting class.
    pub acceptance_probability: f64,
    /// Every reachable class accepts and lies in an accepting MEC.
    pub accepted: bool,
}

/// States reachable from `from` along edges heavier than `edge_tol`.
pub fn reachable_states(ca: &ChainAnalysis, from: StateId, edge_tol: f64) -> Vec<bool> {
    let n = ca.chain.n_states();
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = q.pop_front() {
        for t in 0..n {
            if !seen[t] && ca.chain.p[(s, t)] > edge_tol {
                seen[t] = true;
                q.push_back(t);
            }
        }
    }
    seen
}

/// Analyzes `p` on `pm` and certifies the recurrent classes reachable from
/// the initial state against the pairs and the given accepting MECs.
pub fn certify(
    pm: &ProductMdp,
    p: &StationaryPolicy,
    amecs: &[EndComponent],
    edge_tol: f64,
) -> Result<(ChainAnalysis, Certificate)> {
    let ca = analyze_with(&induce_chain(pm, p)?, edge_tol)?;
    let reach = reachable_states(&ca, pm.initial, edge_tol);
    let mut classes = Vec::new();
    for (k, cls) in ca.recurrent_classes.iter().enumerate() {
        if !reach[cls[0]] {
            continue;
        }
        classes.push(ClassCertificate {
            states: cls.clone(),
            probability: ca.absorb[(pm.initial, k)],
            pair: pm.accepting_pair(cls),
            amec: amecs.iter().position(|ec| cls.iter().all(|&s| ec.contains_state(s))),
        });
    }
    let absorption = classes.iter().map(|c| c.probability).sum();
    let acceptance_probability = classes.iter().filter(|c| c.pair.is_some()).map(|c| c.probability).sum();
    let accepted = classes.iter().all(|c| c.pair.is_some() && c.amec.is_some());
    Ok((ca, Certificate { classes, absorption, acceptance_probability, accepted }))
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    #[serde(skip)]
    pub policy: StationaryPolicy,
    /// Claimed optimum over accepting policies from the initial state.
    pub value: f64,
    /// Analytic efficiency of `policy` from the initial state.
    pub efficiency: f64,
    pub epsilon: f64,
    pub method: Method,
    pub components: Vec<ComponentReport>,
    /// Punitive reward off accepting MECs (general case only).
    pub k: Option<f64>,
    /// Optimal average reward of the surrogate program from the initial state.
    pub k_gain: Option<f64>,
    /// Objective of the surrogate program (uniformly weighted over states).
    pub avg_gain: Option<f64>,
    pub certificate: Certificate,
}

impl SynthesisReport {
    /// Degree applied in the first component the policy settles in.
    pub fn delta(&self) -> Option<f64> {
        self.components.iter().find(|c| c.used).and_then(|c| c.delta)
    }
}

/// Synthesis on a communicating product.
pub fn synth_communicating(
    pm: &ProductMdp,
    r: &UtilityFn,
    c: &UtilityFn,
    epsilon: f64,
    opts: &SynthOptions,
) -> Result<SynthesisReport> {
    check_epsilon(epsilon)?;
    check_utilities(pm, r, c)?;
    if !is_communicating(pm) {
        return Err(Error::NotCommunicating);
    }
    let plan = CommunicatingPlan::new(pm.clone(), r, c, opts)?;
    let (policy, comp) = plan.finish(epsilon)?;
    let amecs = amec_filter(pm);
    let (ca, certificate) = certify(pm, &policy, &amecs, opts.edge_tol)?;
    Ok(SynthesisReport {
        efficiency: efficiency(&ca, r, c, &policy, pm.initial),
        policy,
        value: plan.value(),
        epsilon,
        method: opts.method,
        components: vec![comp],
        k: None,
        k_gain: None,
        avg_gain: None,
        certificate,
    })
}

fn check_utilities(pm: &ProductMdp, r: &UtilityFn, c: &UtilityFn) -> Result<()> {
    if r.kind != UtilityKind::Reward || c.kind != UtilityKind::Cost {
        return Err(Error::Param("expected a reward and a cost function".into()));
    }
    r.validate(pm)?;
    c.validate(pm)
}

/// `(R_K, K)`: the component value on component state-action pairs and the
/// punitive constant elsewhere.
pub fn build_reward_k(
    pm: &Mdp,
    amecs: &[EndComponent],
    values: &[f64],
    r: &UtilityFn,
    c: &UtilityFn,
    k_margin: f64,
) -> (UtilityFn, f64) {
    let k = -r.max_abs() / c.min() - k_margin;
    let rk = UtilityFn::from_fn(pm, UtilityKind::Reward, |s, a| {
        amecs
            .iter()
            .zip(values)
            .find(|(ec, _)| ec.act.get(&s).is_some_and(|acts| acts.binary_search(&a).is_ok()))
            .map_or(k, |(_, &v)| v)
    });
    (rk, k)
}

/// The epsilon-independent half of the general-case algorithm.
#[derive(Debug, Clone)]
pub struct GeneralPlan {
    pub pm: ProductMdp,
    /// Almost-sure region with its safe actions.
    pub region: Restriction,
    pub sub: ProductMdp,
    /// Accepting MECs, in `sub` indices.
    pub amecs: Vec<EndComponent>,
    pub components: Vec<(Restriction, CommunicatingPlan)>,
    pub reward_k: UtilityFn,
    pub k: f64,
    pub avg_gain: f64,
    pub k_gain: f64,
    pub mu_k: StationaryPolicy,
    /// Per component, whether the surrogate policy recurs in it.
    pub recurrent: Vec<bool>,
    pub r: UtilityFn,
    pub c: UtilityFn,
    pub opts: SynthOptions,
}

impl GeneralPlan {
    pub fn new(pm: &ProductMdp, r: &UtilityFn, c: &UtilityFn, opts: &SynthOptions) -> Result<Self> {
        opts.validate()?;
        check_utilities(pm, r, c)?;
        let states = almost_sure_region(pm);
        if states.binary_search(&pm.initial).is_err() {
            return Err(Error::TaskUnsatisfiable);
        }
        let mut mask = vec![false; pm.n_states()];
        states.iter().for_each(|&s| mask[s] = true);
        let keep: Vec<Vec<usize>> = states
            .iter()
            .map(|&s| {
                (0..pm.choices[s].len())
                    .filter(|&i| pm.choices[s][i].succ.iter().all(|&(t, p)| p <= 0.0 || mask[t]))
                    .collect()
            })
            .collect();
        let region = pm.restrict(&states, &keep, pm.initial)?;
        let sub = region.product(pm);
        let (sr, sc) = (region.utility(r), region.utility(c));
        let amecs = amec_filter(&sub);
        if amecs.is_empty() {
            return Err(Error::TaskUnsatisfiable);
        }
        let components = amecs
            .par_iter()
            .map(|ec| {
                let ra = ec.restriction(&sub, None)?;
                let spm = ra.product(&sub);
                let (ar, ac) = (ra.utility(&sr), ra.utility(&sc));
                let plan = CommunicatingPlan::new(spm, &ar, &ac, opts)?;
                Ok((ra, plan))
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = components.iter().map(|(_, p)| p.value()).collect();
        let (reward_k, k) = build_reward_k(&sub, &amecs, &values, &sr, &sc, opts.k_margin);
        let avg = solve_avg_reward_lp(&sub, &reward_k)?;
        let mu_k = decode_avg_policy_with(&sub, &avg, opts.support_tol)?;
        let ca = analyze_with(&induce_chain(&sub, &mu_k)?, opts.edge_tol)?;
        let k_gain = average_utility(&ca, &reward_k, &mu_k, sub.initial);
        let recurrent = amecs
            .iter()
            .map(|ec| ca.recurrent_classes.iter().flatten().any(|&s| ec.contains_state(s)))
            .collect();
        Ok(GeneralPlan {
            pm: pm.clone(),
            region,
            sub,
            amecs,
            components,
            reward_k,
            k,
            avg_gain: avg.gain,
            k_gain,
            mu_k,
            recurrent,
            r: r.clone(),
            c: c.clone(),
            opts: *opts,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(|(_, p)| p.value()).collect()
    }

    pub fn finish(&self, epsilon: f64) -> Result<SynthesisReport> {
        self.finish_with(epsilon, self.opts.method)
    }

    pub fn finish_with(&self, epsilon: f64, method: Method) -> Result<SynthesisReport> {
        check_epsilon(epsilon)?;
        let mut local = self.mu_k.clone();
        let mut reports = Vec::with_capacity(self.components.len());
        for (j, (ra, plan)) in self.components.iter().enumerate() {
            let up = |s: StateId| self.region.states[ra.states[s]];
            let mut rep = if self.recurrent[j] {
                let (p, rep) = plan.finish_with(epsilon, method)?;
                ra.lift_policy(&p, &mut local);
                rep
            } else {
                ComponentReport {
                    states: Vec::new(),
                    value: plan.value(),
                    maecs: plan
                        .maecs
                        .iter()
                        .map(|m| MaecReport { states: m.ec.states.clone(), value: m.value })
                        .collect(),
                    chosen_maec: plan.best,
                    no_perturbation: plan.no_perturbation,
                    used: false,
                    plan: None,
                    delta: None,
                }
            };
            rep.states = ra.states.iter().map(|&s| self.region.states[s]).collect();
            for m in &mut rep.maecs {
                m.states = m.states.iter().map(|&s| up(s)).collect();
            }
            reports.push(rep);
        }
        let mut policy = StationaryPolicy::uniform(&self.pm);
        self.region.lift_policy(&local, &mut policy);
        let amecs: Vec<EndComponent> = self.amecs.iter().map(|ec| lift_ec(ec, &self.region)).collect();
        let (ca, certificate) = certify(&self.pm, &policy, &amecs, self.opts.edge_tol)?;
        Ok(SynthesisReport {
            efficiency: efficiency(&ca, &self.r, &self.c, &policy, self.pm.initial),
            policy,
            value: self.k_gain,
            epsilon,
            method,
            components: reports,
            k: Some(self.k),
            k_gain: Some(self.k_gain),
            avg_gain: Some(self.avg_gain),
            certificate,
        })
    }
}

/// Maps an end component of a restriction back to parent indices.
fn lift_ec(ec: &EndComponent, rs: &Restriction) -> EndComponent {
    let states: Vec<StateId> = ec.states.iter().map(|&s| rs.states[s]).collect();
    let act = ec.act.iter().map(|(&s, a)| (rs.states[s], a.clone())).collect();
    EndComponent {
        sub: SubMdp { states, act },
        witness: ec.witness.iter().map(|&s| rs.states[s]).collect(),
    }
}

/// Synthesis on an arbitrary product.
pub fn synth_general(
    pm: &ProductMdp,
    r: &UtilityFn,
    c: &UtilityFn,
    epsilon: f64,
    opts: &SynthOptions,
) -> Result<SynthesisReport> {
    check_epsilon(epsilon)?;
    GeneralPlan::new(pm, r, c, opts)?.finish(epsilon)
}
