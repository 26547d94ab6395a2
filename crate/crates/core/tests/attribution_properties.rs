use dor_core::attribution::{dor, shapley, DorReport};
use dor_core::identification::identify_responsible;
use dor_core::pipeline::{compute_dor, DorOptions};
use dor_core::reachability::{coalition_utility, compute_q};
use dor_core::scenario::{builtin_scenario, load, BUILTIN_IDS};
use dor_core::synth::{random_small, SmallLimits};
use dor_core::AgentSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn efficiency_and_sign(seed in any::<u64>()) {
        let (m, tr) = random_small(&mut ChaCha8Rng::seed_from_u64(seed), SmallLimits::default());
        let q = compute_q(&m, tr.horizon()).unwrap();
        let u = |y: AgentSet| coalition_utility(&q, &tr, y);
        let phi = shapley(m.n_agents(), u).unwrap();
        let gap = u(AgentSet::full(m.n_agents())).unwrap() - u(AgentSet::empty()).unwrap();
        prop_assert!((phi.iter().sum::<f64>() - gap).abs() <= 1e-9);
        prop_assert!(phi.iter().all(|&p| p <= 1e-9));
    }

    #[test]
    fn scaling_keeps_degree_of_responsibility(seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let (m, tr) = random_small(&mut ChaCha8Rng::seed_from_u64(seed), SmallLimits::default());
        let q = compute_q(&m, tr.horizon()).unwrap();
        let n = m.n_agents();
        let phi = shapley(n, |y| coalition_utility(&q, &tr, y)).unwrap();
        let scaled = shapley(n, |y| coalition_utility(&q, &tr, y).map(|v| lambda * v)).unwrap();
        for (a, b) in phi.iter().zip(&scaled) {
            prop_assert!((lambda * a - b).abs() <= 1e-9 * lambda.max(1.0));
        }
        let (d, ds) = (dor(&phi).unwrap(), dor(&scaled).unwrap());
        if !d.no_responsibility && !ds.no_responsibility {
            for (a, b) in d.psi.iter().zip(&ds.psi) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn larger_epsilon_screens_fewer_agents(seed in any::<u64>(), e1 in 1e-9f64..0.5, e2 in 1e-9f64..0.5) {
        let (m, tr) = random_small(&mut ChaCha8Rng::seed_from_u64(seed), SmallLimits::default());
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let wide = identify_responsible(&m, &tr, lo).unwrap();
        let narrow = identify_responsible(&m, &tr, hi).unwrap();
        prop_assert!(narrow.is_subset(wide));
    }
}

#[test]
fn reports_survive_json_round_trip() {
    for id in BUILTIN_IDS {
        let sc = load(&builtin_scenario(id).unwrap(), id).unwrap();
        let (report, _) = compute_dor(&sc.model, &sc.trajectory, id, &DorOptions::default()).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: DorReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}

#[test]
fn restricted_pipeline_agrees_on_builtins() {
    for id in BUILTIN_IDS {
        let sc = load(&builtin_scenario(id).unwrap(), id).unwrap();
        let (full, _) = compute_dor(&sc.model, &sc.trajectory, id, &DorOptions::default()).unwrap();
        let opts = DorOptions {
            restrict: true,
            ..DorOptions::default()
        };
        let (restricted, _) = compute_dor(&sc.model, &sc.trajectory, id, &opts).unwrap();
        for (a, b) in full.psi().iter().zip(restricted.psi()) {
            assert!((a - b).abs() <= 1e-9, "{id}");
        }
        assert_eq!(full.responsible_set, restricted.responsible_set, "{id}");
    }
}
