//! Property tests: parser round trips and robustness, graph decompositions
//! against brute force, chain limits, simulation and synthesis invariants.

mod common;

use common::*;
use effsynth::chain::analyze;
use effsynth::graph::{almost_sure_region, amec_filter, maec_decompose, mec_decompose, EndComponent};
use effsynth::model::{build_product, induce_chain, Choice, Dra, Mc, Mdp, ProductMdp, RabinPair, StationaryPolicy, UtilityFn, UtilityKind};
use effsynth::parsers::{
    parse_dra, parse_model, parse_policy, parse_utility_table, write_dra, write_model, write_policy, write_utility_table,
};
use effsynth::sim::{simulate, RolloutConfig};
use effsynth::synthesis::{synth_communicating, synth_general, Method, SynthOptions};
use proptest::prelude::*;
use rand::Rng;

fn as_ec(ec: &EndComponent) -> Ec {
    Ec { states: ec.states.clone(), act: ec.act.clone() }
}

fn sorted(mut v: Vec<Ec>) -> Vec<Ec> {
    v.sort();
    v
}

fn random_dra(seed: u64) -> Dra {
    let mut g = rng(seed);
    let n_ap = g.random_range(0..=2);
    let n = g.random_range(1..=4);
    let ap = (0..n_ap).map(|i| format!("p{i}")).collect();
    let mut d = Dra::new(ap, n, g.random_range(0..n));
    for q in 0..n {
        d.set_edges(q, |_| g.random_range(0..n));
    }
    let k = g.random_range(1..=2);
    d.pairs = (0..k)
        .map(|_| {
            let bad: Vec<usize> = (0..n).filter(|_| g.random_bool(0.3)).collect();
            let good: Vec<usize> = (0..n).filter(|q| !bad.contains(q) && g.random_bool(0.5)).collect();
            RabinPair { bad, good }
        })
        .collect();
    d
}

/// Labels drawn from the automaton's propositions so products are well formed.
fn labelled(mut m: Mdp, d: &Dra, seed: u64) -> Mdp {
    let mut g = rng(seed);
    m.prop_names = d.ap.clone();
    m.labels = (0..m.n_states())
        .map(|_| (0..d.ap.len()).filter(|_| g.random_bool(0.5)).collect())
        .collect();
    m
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn model_text_round_trips(seed in any::<u64>(), n in 1usize..7) {
        let mut g = rng(seed);
        let m = labelled(random_mdp(&mut g, n, 3), &random_dra(seed), seed ^ 1);
        let (r, c) = random_utilities(&mut g, &m);
        let text = write_model(&m, Some(&r), Some(&c));
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back.mdp, &m);
        prop_assert_eq!(back.reward.as_ref(), Some(&r));
        prop_assert_eq!(back.cost.as_ref(), Some(&c));
        prop_assert_eq!(write_model(&back.mdp, None, None), write_model(&m, None, None));
    }

    #[test]
    fn table_round_trips(seed in any::<u64>(), n in 1usize..7) {
        let mut g = rng(seed);
        let m = random_mdp(&mut g, n, 3);
        let (r, c) = random_utilities(&mut g, &m);
        let (r2, c2) = parse_utility_table(&write_utility_table(&m, &r, &c), &m).unwrap();
        prop_assert_eq!(r2, r);
        prop_assert_eq!(c2, c);
    }

    #[test]
    fn policy_round_trips(seed in any::<u64>(), n in 1usize..7) {
        let mut g = rng(seed);
        let m = random_mdp(&mut g, n, 3);
        let p = random_policy(&mut g, &m);
        let back = parse_policy(&write_policy(&m, &p, &[("epsilon", "0.01".into())]), &m).unwrap();
        for (a, b) in p.probs.iter().zip(&back.probs) {
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-10, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn automaton_round_trips(seed in any::<u64>()) {
        let d = random_dra(seed);
        let back = parse_dra(&write_dra(&d)).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn parsers_never_panic_on_noise(text in "[ -~\n]{0,200}") {
        let _ = parse_model(&text);
        let _ = parse_dra(&text);
        let m = random_mdp(&mut rng(7), 3, 2);
        let _ = parse_utility_table(&text, &m);
        let _ = parse_policy(&text, &m);
    }

    #[test]
    fn parsers_never_panic_on_damaged_input(seed in any::<u64>(), cut in 0usize..400, junk in "[ -~]{0,12}") {
        let mut g = rng(seed);
        let d = random_dra(seed);
        let m = labelled(random_mdp(&mut g, 4, 2), &d, seed);
        let (r, c) = random_utilities(&mut g, &m);
        for text in [write_model(&m, Some(&r), Some(&c)), write_dra(&d), write_utility_table(&m, &r, &c)] {
            let mut at = cut.min(text.len());
            while !text.is_char_boundary(at) {
                at -= 1;
            }
            let damaged = format!("{}{}{}", &text[..at], junk, &text[at..]);
            let _ = parse_model(&damaged);
            let _ = parse_dra(&damaged);
            let _ = parse_utility_table(&damaged, &m);
            let _ = parse_policy(&damaged, &m);
        }
    }

    #[test]
    fn mecs_match_brute_force(seed in any::<u64>(), n in 1usize..8) {
        let m = random_mdp(&mut rng(seed), n, 3);
        let mecs = mec_decompose(&m);
        for ec in &mecs {
            prop_assert!(ec.verify(&m));
        }
        prop_assert_eq!(sorted(mecs.iter().map(as_ec).collect()), brute_mecs(&m, &vec![true; n]));
    }

    #[test]
    fn accepting_components_match_brute_force(seed in any::<u64>(), n in 1usize..7, multi in any::<bool>()) {
        let mut g = rng(seed);
        let pm = if multi {
            random_multichain(&mut g)
        } else {
            let m = random_mdp(&mut g, n, 3);
            let pairs = random_pairs(&mut g, n);
            ProductMdp::from_parts(m, &pairs)
        };
        let maecs = maec_decompose(&pm);
        for ec in &maecs {
            prop_assert!(ec.verify(&pm.mdp));
            prop_assert!(pm.accepting_pair(&ec.states).is_some());
        }
        prop_assert_eq!(sorted(maecs.iter().map(as_ec).collect()), brute_maecs(&pm));
        let amecs = amec_filter(&pm);
        let brute = brute_amecs(&pm);
        prop_assert_eq!(sorted(amecs.iter().map(as_ec).collect()), brute.clone());

        let mut target = vec![false; pm.n_states()];
        brute.iter().flat_map(|ec| &ec.states).for_each(|&s| target[s] = true);
        let reach = brute_as_reach(&pm.mdp, &target);
        let expect: Vec<usize> = (0..pm.n_states()).filter(|&s| reach[s]).collect();
        prop_assert_eq!(almost_sure_region(&pm), expect);
    }

    #[test]
    fn product_is_deterministic_and_complete(seed in any::<u64>(), n in 1usize..6) {
        let d = random_dra(seed);
        let m = labelled(random_mdp(&mut rng(seed), n, 2), &d, seed ^ 3);
        let pm = build_product(&m, &d).unwrap();
        prop_assert!(pm.n_states() <= n * d.n_states());
        for (s, row) in pm.mdp.choices.iter().enumerate() {
            for ch in row {
                let total: f64 = ch.succ.iter().map(|e| e.1).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12, "state {} sums to {}", s, total);
            }
        }
    }

    #[test]
    fn chain_limit_matches_squaring(seed in any::<u64>(), n in 1usize..9) {
        let p = random_chain(&mut rng(seed), n);
        let ca = analyze(&Mc { p: p.clone(), initial: 0 }).unwrap();
        let oracle = limit_matrix(&p);
        prop_assert!(max_abs(&(&ca.limit - &oracle)) <= 1e-8);
        prop_assert_eq!(&ca.recurrent_classes, &classes_from_limit(&oracle));
        let n_rec: usize = ca.recurrent_classes.iter().map(Vec::len).sum();
        prop_assert_eq!(n_rec + ca.transient.len(), n);
        for k in 0..ca.recurrent_classes.len() {
            let mass: f64 = ca.stationary[k].iter().sum();
            prop_assert!((mass - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn mixing_keeps_policies_valid(seed in any::<u64>(), n in 1usize..6, delta in 0.0f64..=1.0) {
        let mut g = rng(seed);
        let m = random_mdp(&mut g, n, 3);
        let a = random_policy(&mut g, &m);
        let b = StationaryPolicy::uniform(&m);
        let mixed = a.mix(&b, delta);
        prop_assert!(mixed.validate(&m).is_ok());
        prop_assert_eq!(a.mix(&b, 0.0), a.clone());
        for (row_a, (row_b, row_m)) in a.probs.iter().zip(b.probs.iter().zip(&mixed.probs)) {
            for ((x, y), z) in row_a.iter().zip(row_b).zip(row_m) {
                prop_assert!(*z >= x.min(*y) - 1e-15 && *z <= x.max(*y) + 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), n in 1usize..6) {
        let mut g = rng(seed);
        let m = random_mdp(&mut g, n, 2);
        let (r, c) = random_utilities(&mut g, &m);
        let p = random_policy(&mut g, &m);
        let cfg = RolloutConfig { steps: 500, rollouts: 3, seed };
        let a = simulate(&m, &p, &r, &c, &cfg).unwrap();
        let b = simulate(&m, &p, &r, &c, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let mass: f64 = a.visit_freq.iter().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-9);
        prop_assert_eq!(a.ratios.len(), 3);
        // The final-step ratio is a ratio of sums, so it stays within the per-pair extremes.
        let lo = (0..n).flat_map(|s| (0..m.choices[s].len()).map(move |i| (s, i)))
            .map(|(s, i)| r.values[s][i] / c.values[s][i]).fold(f64::INFINITY, f64::min);
        let hi = (0..n).flat_map(|s| (0..m.choices[s].len()).map(move |i| (s, i)))
            .map(|(s, i)| r.values[s][i] / c.values[s][i]).fold(f64::NEG_INFINITY, f64::max);
        for x in &a.ratios {
            prop_assert!(*x >= lo - 1e-9 && *x <= hi + 1e-9);
        }
    }

    #[test]
    fn general_agrees_with_communicating(seed in any::<u64>(), n in 1usize..6) {
        let mut g = rng(seed);
        let m = random_communicating(&mut g, n, 3);
        let (r, c) = random_utilities(&mut g, &m);
        let pairs = random_pairs(&mut g, n);
        let pm = ProductMdp::from_parts(m, &pairs);
        prop_assume!(!brute_maecs(&pm).is_empty());
        let opts = SynthOptions::default();
        let a = synth_communicating(&pm, &r, &c, 1e-2, &opts).unwrap();
        let b = synth_general(&pm, &r, &c, 1e-2, &opts).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-7, "{} vs {}", a.value, b.value);
        prop_assert!(b.certificate.accepted);
        prop_assert!(oracle_certificate(&pm, &b.policy).is_ok());
    }

    #[test]
    fn estimated_degree_is_linear_and_exact_dominates(seed in any::<u64>(), n in 2usize..6) {
        let mut g = rng(seed);
        let m = random_communicating(&mut g, n, 3);
        let (r, c) = random_utilities(&mut g, &m);
        let pairs = random_pairs(&mut g, n);
        let pm = ProductMdp::from_parts(m, &pairs);
        prop_assume!(!brute_maecs(&pm).is_empty());
        let delta = |eps: f64, method: Method| {
            let opts = SynthOptions { method, shortcut: false, ..SynthOptions::default() };
            synth_communicating(&pm, &r, &c, eps, &opts).unwrap().delta()
        };
        let (Some(d1), Some(d2)) = (delta(1e-3, Method::Es), delta(2e-3, Method::Es)) else {
            return Ok(());
        };
        if d1 > 0.0 && d2 < 0.5 {
            prop_assert!((d2 / d1 - 2.0).abs() <= 1e-9, "{} {}", d1, d2);
        }
        if let Some(dx) = delta(1e-3, Method::Ex) {
            prop_assert!(dx >= d1 * (1.0 - 1e-9), "ex {} es {}", dx, d1);
        }
    }

    #[test]
    fn punitive_reward_sits_below_every_ratio(seed in any::<u64>()) {
        let mut g = rng(seed);
        let pm = random_multichain(&mut g);
        let (r, c) = random_utilities(&mut g, &pm.mdp);
        prop_assume!(!brute_amecs(&pm).is_empty() && almost_sure_region(&pm).contains(&pm.mdp.initial));
        let opts = SynthOptions::default();
        let rep = synth_general(&pm, &r, &c, 1e-2, &opts).unwrap();
        // K only sees actions that keep the walk inside the almost-sure region.
        let region = almost_sure_region(&pm);
        let safe: Vec<(usize, usize)> = region
            .iter()
            .flat_map(|&s| (0..pm.mdp.choices[s].len()).map(move |i| (s, i)))
            .filter(|&(s, i)| pm.mdp.choices[s][i].succ.iter().all(|e| region.contains(&e.0)))
            .collect();
        let max_r = safe.iter().fold(0.0f64, |a, &(s, i)| a.max(r.values[s][i].abs()));
        let min_c = safe.iter().fold(f64::INFINITY, |a, &(s, i)| a.min(c.values[s][i]));
        let bound = -max_r / min_c;
        if let Some(k) = rep.k {
            prop_assert!(k < bound, "K {} bound {}", k, bound);
        }
        prop_assert!(rep.efficiency >= rep.value - 1e-2 - 1e-7);
    }
}

#[test]
fn single_loop_simulates_exactly() {
    let m = mdp_from(vec![vec![Choice { action: 0, succ: vec![(0, 1.0)] }]], 1);
    let r = UtilityFn::constant(&m, UtilityKind::Reward, 2.0);
    let c = UtilityFn::constant(&m, UtilityKind::Cost, 4.0);
    let p = StationaryPolicy::uniform(&m);
    let st = simulate(&m, &p, &r, &c, &RolloutConfig { steps: 1000, rollouts: 4, seed: 1 }).unwrap();
    assert_eq!(st.mean_ratio, 0.5);
    assert_eq!(st.stderr, 0.0);
    assert_eq!(st.visit_freq, vec![1.0]);
    let ca = analyze(&induce_chain(&m, &p).unwrap()).unwrap();
    assert!(ca.is_unichain());
}
