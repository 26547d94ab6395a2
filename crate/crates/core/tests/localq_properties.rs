use dor_core::localq::{certify_decay, local_q, marginalize_transitions, max_block_error, FactoredMmdp, WeightScheme};
use dor_core::model::Trajectory;
use dor_core::reachability::compute_q;
use dor_core::synth::{networked, NetworkParams, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network(seed: u64, agents: usize, ring: bool) -> (FactoredMmdp, Trajectory) {
    let params = NetworkParams {
        agents,
        topology: if ring { Topology::Ring } else { Topology::Chain },
        coupling: 0.01,
        horizon: 3,
    };
    let (f, tr, _) = networked(&mut ChaCha8Rng::seed_from_u64(seed), params);
    (f, tr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn marginal_rows_are_distributions(seed in any::<u64>(), agents in 3usize..6, ring in any::<bool>(), k in 0usize..3) {
        let (f, _) = network(seed, agents, ring);
        for i in 0..agents {
            let lt = marginalize_transitions(&f, i, k, &WeightScheme::Uniform).unwrap();
            for b in 0..lt.block().state_space().len() {
                for &a in lt.actions(b) {
                    let row = lt.row(b, a).unwrap();
                    prop_assert!(row.iter().all(|&(_, p)| p >= 0.0));
                    let total: f64 = row.iter().map(|&(_, p)| p).sum();
                    prop_assert!((total - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn stage_zero_error_within_envelope(seed in any::<u64>(), agents in 3usize..6, ring in any::<bool>()) {
        let (f, tr) = network(seed, agents, ring);
        let d = f.graph().diameter().unwrap();
        let cert = certify_decay(&f, d).unwrap();
        prop_assume!(cert.certified);
        let q = compute_q(f.model(), tr.horizon()).unwrap();
        for k in 0..=d {
            for i in 0..agents {
                let lq = local_q(&f, i, k, &WeightScheme::Uniform, tr.horizon()).unwrap();
                prop_assert!(max_block_error(&q, &lq, 0).unwrap() <= cert.envelope(k) + 1e-12);
            }
        }
    }

    #[test]
    fn error_shrinks_as_ball_grows(seed in any::<u64>(), agents in 3usize..6, ring in any::<bool>()) {
        let (f, tr) = network(seed, agents, ring);
        let d = f.graph().diameter().unwrap();
        prop_assume!(certify_decay(&f, d).unwrap().certified);
        let q = compute_q(f.model(), tr.horizon()).unwrap();
        for i in 0..agents {
            for t in 0..tr.horizon() {
                let mut prev = f64::INFINITY;
                for k in 0..=d {
                    let lq = local_q(&f, i, k, &WeightScheme::Uniform, tr.horizon()).unwrap();
                    let err = max_block_error(&q, &lq, t).unwrap();
                    prop_assert!(err <= prev + 1e-9, "agent {i} stage {t} k {k}: {err} > {prev}");
                    prev = err;
                }
            }
        }
    }
}
