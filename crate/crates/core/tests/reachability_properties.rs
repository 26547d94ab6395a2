use dor_core::reachability::oracle::brute_force_utility;
use dor_core::reachability::{coalition_utility, compute_q, counterfactual_utility};
use dor_core::synth::{random_small, SmallLimits};
use dor_core::AgentSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (dor_core::model::Mmdp, dor_core::model::Trajectory) {
    random_small(&mut ChaCha8Rng::seed_from_u64(seed), SmallLimits::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dynamic_program_matches_enumeration(seed in any::<u64>()) {
        let (m, tr) = instance(seed);
        let q = compute_q(&m, tr.horizon()).unwrap();
        for y in AgentSet::full(m.n_agents()).subsets() {
            let fast = coalition_utility(&q, &tr, y).unwrap();
            let slow = brute_force_utility(&m, &tr, y).unwrap();
            prop_assert!((fast - slow).abs() <= 1e-12, "{y:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn larger_coalitions_never_raise_risk(seed in any::<u64>()) {
        let (m, tr) = instance(seed);
        let q = compute_q(&m, tr.horizon()).unwrap();
        let all = AgentSet::full(m.n_agents());
        for t in tr.decision_stages() {
            for small in all.subsets() {
                let r_small = counterfactual_utility(&q, &tr, small, t).unwrap();
                for big in all.subsets().filter(|b| small.is_subset(*b)) {
                    let r_big = counterfactual_utility(&q, &tr, big, t).unwrap();
                    prop_assert!(r_small + 1e-12 >= r_big);
                }
            }
        }
    }

    #[test]
    fn values_are_probabilities(seed in any::<u64>()) {
        let (m, tr) = instance(seed);
        let q = compute_q(&m, tr.horizon()).unwrap();
        for t in 0..=q.horizon() {
            for s in 0..m.state_space().len() {
                for &a in q.actions(s) {
                    let v = q.value(s, a, t).unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        for y in AgentSet::full(m.n_agents()).subsets() {
            for t in tr.decision_stages() {
                let r = counterfactual_utility(&q, &tr, y, t).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn tables_are_bit_identical_across_runs(seed in any::<u64>()) {
        let (m, tr) = instance(seed);
        let a = compute_q(&m, tr.horizon()).unwrap();
        let b = compute_q(&m, tr.horizon()).unwrap();
        for t in 0..=a.horizon() {
            for s in 0..m.state_space().len() {
                prop_assert_eq!(a.actions(s), b.actions(s));
                for &act in a.actions(s) {
                    let (x, y) = (a.value(s, act, t).unwrap(), b.value(s, act, t).unwrap());
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
