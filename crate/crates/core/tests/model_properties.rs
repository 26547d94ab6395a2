use dor_core::model::{validate_mmdp, Admissibility, Dynamics, JointTransitions, Mmdp, UnsafeSpec};
use dor_core::synth::{random_small, SmallLimits};
use dor_core::JointSpace;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn joint_index_round_trips(radices in prop::collection::vec(1usize..5, 1..5), pick in any::<u64>()) {
        let space = JointSpace::new(radices.clone()).unwrap();
        prop_assert_eq!(space.len(), radices.iter().product::<usize>());
        let index = (pick as usize) % space.len();
        let parts = space.decode(index);
        prop_assert!(parts.iter().zip(&radices).all(|(p, r)| p < r));
        prop_assert_eq!(space.encode(&parts).unwrap(), index);
    }

    #[test]
    fn validated_rows_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = random_small(&mut rng, SmallLimits::default());
        prop_assert!(validate_mmdp(&m).ok);
        let n = m.state_space().len();
        for s in 0..n {
            for a in m.admissible_actions(s) {
                let total: f64 = (0..n).map(|s2| m.transition_prob(s, a, s2).unwrap()).sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
            }
        }
    }
}

fn build(labels: &[Vec<&str>], spec: UnsafeSpec) -> Mmdp {
    let n = labels.len();
    let counts: Vec<usize> = labels.iter().map(Vec::len).collect();
    let ss = JointSpace::new(counts).unwrap();
    let mut t = JointTransitions::new();
    for s in 0..ss.len() {
        t.insert(s, 0, s, 1.0);
    }
    Mmdp::new(
        (0..n).map(|i| format!("v{i}")).collect(),
        labels
            .iter()
            .map(|l| l.iter().map(|s| s.to_string()).collect())
            .collect(),
        vec![vec!["stay".to_string()]; n],
        Admissibility::All,
        Dynamics::Joint(t),
        spec,
    )
    .unwrap()
}

#[test]
fn collision_matches_explicit_enumeration() {
    let locations = ["l1", "l2", "l3", "l4", "l5"];
    let mut checked = 0;
    for n in 1..=3 {
        for width in 1..=locations.len() {
            // each agent sees a shifted window of the five locations
            let labels: Vec<Vec<&str>> = (0..n)
                .map(|i| (0..width).map(|j| locations[(i + j) % locations.len()]).collect())
                .collect();
            let collision = build(&labels, UnsafeSpec::Collision { pairs: None });
            let ss = collision.state_space().clone();
            let mut patterns = Vec::new();
            for s in 0..ss.len() {
                let tup = ss.decode(s);
                let clash = (0..n).any(|a| {
                    (a + 1..n).any(|b| labels[a][tup[a]] == labels[b][tup[b]])
                });
                if clash {
                    patterns.push(tup.into_iter().map(Some).collect());
                }
            }
            let explicit = build(&labels, UnsafeSpec::Explicit(patterns));
            for s in 0..ss.len() {
                assert_eq!(collision.is_unsafe(s).unwrap(), explicit.is_unsafe(s).unwrap());
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}
