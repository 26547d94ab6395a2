//! Random instance generators for property tests and the acceptance suite.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::localq::{FactoredMmdp, InteractionGraph};
use crate::model::{
    Admissibility, Dynamics, Factor, ForbiddenRule, JointTransitions, Mmdp, Trajectory, UnsafeSpec,
};
use crate::space::JointSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallLimits {
    pub max_agents: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_horizon: usize,
}

impl Default for SmallLimits {
    fn default() -> Self {
        SmallLimits {
            max_agents: 3,
            max_states: 3,
            max_actions: 2,
            max_horizon: 4,
        }
    }
}

fn random_row<R: Rng>(rng: &mut R, n_states: usize) -> Vec<(usize, f64)> {
    let support = rng.gen_range(1..=n_states.min(3));
    let mut targets: Vec<usize> = (0..n_states).collect();
    targets.shuffle(rng);
    targets.truncate(support);
    targets.sort_unstable();
    let raw: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    targets.into_iter().zip(raw).map(|(t, w)| (t, w / total)).collect()
}

fn sample<R: Rng>(rng: &mut R, row: &[(usize, f64)]) -> usize {
    let mut x = rng.gen::<f64>();
    for &(s, p) in row {
        if x < p {
            return s;
        }
        x -= p;
    }
    row.last().unwrap().0
}

fn sample_path<R: Rng>(rng: &mut R, m: &Mmdp, horizon: usize) -> Trajectory {
    let ss = m.state_space();
    let safe: Vec<usize> = (0..ss.len()).filter(|&s| !m.is_unsafe(s).unwrap()).collect();
    let mut s = *safe.choose(rng).unwrap_or(&0);
    let mut states = vec![ss.decode(s)];
    let mut actions = Vec::new();
    for _ in 1..horizon {
        let acts = m.admissible_actions(s);
        let a = *acts.choose(rng).unwrap();
        let s2 = sample(rng, &m.successors(s, a));
        actions.push(m.action_space().decode(a));
        states.push(ss.decode(s2));
        s = s2;
    }
    let violation = m.is_unsafe(s).unwrap();
    Trajectory::new(states, actions, violation)
}

/// Small MMDP with sparse stochastic joint rows, absorbing unsafe states and
/// a trajectory sampled from the model.
pub fn random_small<R: Rng>(rng: &mut R, limits: SmallLimits) -> (Mmdp, Trajectory) {
    let n = rng.gen_range(1..=limits.max_agents);
    let state_counts: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=limits.max_states.max(2))).collect();
    let action_counts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=limits.max_actions)).collect();
    let horizon = rng.gen_range(2..=limits.max_horizon.max(2));
    let ss = JointSpace::new(state_counts.clone()).unwrap();
    let asp = JointSpace::new(action_counts.clone()).unwrap();

    let mut patterns = Vec::new();
    for s in 0..ss.len() {
        if rng.gen_bool(0.25) {
            patterns.push(ss.decode(s).into_iter().map(Some).collect::<Vec<_>>());
        }
    }
    if patterns.is_empty() {
        patterns.push(ss.decode(rng.gen_range(0..ss.len())).into_iter().map(Some).collect());
    }
    let matches = |patterns: &[Vec<Option<usize>>], s: usize| {
        let t = ss.decode(s);
        patterns.iter().any(|p| p.iter().zip(&t).all(|(c, v)| *c == Some(*v)))
    };
    if (0..ss.len()).all(|s| matches(&patterns, s)) {
        // keep one safe state
        patterns.pop();
    }
    let bad: Vec<bool> = (0..ss.len()).map(|s| matches(&patterns, s)).collect();

    let admissibility = if rng.gen_bool(0.5) {
        Admissibility::All
    } else {
        let mut map = BTreeMap::new();
        for s in 0..ss.len() {
            if rng.gen_bool(0.5) {
                let mut acts: Vec<usize> = (0..asp.len()).filter(|_| rng.gen_bool(0.6)).collect();
                if acts.is_empty() {
                    acts.push(rng.gen_range(0..asp.len()));
                }
                map.insert(s, acts);
            }
        }
        Admissibility::Joint(map)
    };

    let mut t = JointTransitions::new();
    for s in 0..ss.len() {
        for a in 0..asp.len() {
            if bad[s] {
                t.insert(s, a, s, 1.0);
            } else {
                for (s2, p) in random_row(rng, ss.len()) {
                    t.insert(s, a, s2, p);
                }
            }
        }
    }
    let m = Mmdp::new(
        (0..n).map(|i| format!("g{}", i + 1)).collect(),
        state_counts
            .iter()
            .map(|&c| (0..c).map(|v| format!("s{v}")).collect())
            .collect(),
        action_counts
            .iter()
            .map(|&c| (0..c).map(|v| format!("a{v}")).collect())
            .collect(),
        admissibility,
        Dynamics::Joint(t),
        UnsafeSpec::Explicit(patterns),
    )
    .unwrap();
    let tr = sample_path(rng, &m, horizon);
    (m, tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Chain,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    pub agents: usize,
    pub topology: Topology,
    /// Largest neighbour influence on a transition probability.
    pub coupling: f64,
    pub horizon: usize,
}

/// Weakly coupled networked model: three local states and two actions per
/// agent, factor scopes equal to closed graph neighbourhoods, and a single
/// hub agent whose absorbing state 2 is the unsafe set.
pub fn networked<R: Rng>(rng: &mut R, p: NetworkParams) -> (FactoredMmdp, Trajectory, usize) {
    let n = p.agents;
    let graph = match p.topology {
        Topology::Chain => InteractionGraph::path(n),
        Topology::Ring => InteractionGraph::ring(n),
    };
    let hub = rng.gen_range(0..n);
    let counts = vec![3; n];
    let delta = rng.gen_range(0.0..=p.coupling);
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        let scope = graph.k_hop(i, 1).unwrap().to_vec();
        let mut f = Factor::new(i, scope, &counts, 2).unwrap();
        let base: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(0.05..0.5), rng.gen_range(0.3..0.9)]).collect();
        let own_pos = f.own_position();
        for c in 0..f.context_space().len() {
            let ctx = f.context_space().decode(c);
            let own = ctx[own_pos];
            let others = ctx.len() - 1;
            let pressure = if others == 0 {
                0.0
            } else {
                ctx.iter()
                    .enumerate()
                    .filter(|&(pos, &v)| pos != own_pos && v == 1)
                    .count() as f64
                    / others as f64
            };
            for a in 0..2 {
                let row = if i == hub && own == 2 {
                    vec![(2, 1.0)]
                } else {
                    let q = (base[own][a] + delta * pressure).min(1.0);
                    let target = if i == hub { own + 1 } else { (own + 1) % 3 };
                    let mut row = vec![(own, 1.0 - q), (target, q)];
                    row.sort_unstable_by_key(|&(s, _)| s);
                    row
                };
                f.set_row(&ctx, a, row).unwrap();
            }
        }
        factors.push(f);
    }
    let m = Mmdp::new(
        (0..n).map(|i| format!("n{}", i + 1)).collect(),
        vec![vec!["s0".into(), "s1".into(), "s2".into()]; n],
        vec![vec!["hold".into(), "push".into()]; n],
        Admissibility::All,
        Dynamics::Factored {
            factors,
            freeze_unsafe: true,
        },
        UnsafeSpec::Forbidden(vec![ForbiddenRule {
            agent: hub,
            states: [2].into(),
        }]),
    )
    .unwrap();
    let tr = sample_path(rng, &m, p.horizon);
    (FactoredMmdp::new(m, graph).unwrap(), tr, hub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_mmdp, validate_trajectory};
    use rand::SeedableRng;

    #[test]
    fn generated_models_validate() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let (m, tr) = random_small(&mut rng, SmallLimits::default());
            let report = validate_mmdp(&m).merge(validate_trajectory(&m, &tr));
            assert!(report.ok, "{report}");
        }
    }

    #[test]
    fn generated_networks_validate() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for agents in 4..=6 {
            for topology in [Topology::Chain, Topology::Ring] {
                let params = NetworkParams {
                    agents,
                    topology,
                    coupling: 0.01,
                    horizon: 3,
                };
                let (f, tr, _) = networked(&mut rng, params);
                let report = validate_mmdp(f.model()).merge(validate_trajectory(f.model(), &tr));
                assert!(report.ok, "{report}");
            }
        }
    }
}
