//! Networked approximation: k-hop neighbourhoods, local Q-functions over a
//! neighbourhood block, decay certificates and local responsibility.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Admissibility, Dynamics, Mmdp};
use crate::space::{AgentSet, JointSpace};

mod decay;
mod dor;
mod table;

pub use decay::{certify_decay, DecayCertificate, GAMMA_GRID};
pub use dor::{local_dor, local_utility, LocalDorOptions};
pub use table::{local_q, marginalize_transitions, max_block_error, LocalQTable, LocalTransitions};

/// Upper bound on enumerated (block configuration, outside configuration)
/// pairs.
pub const DEFAULT_WORK_BUDGET: u128 = 100_000_000;

/// Undirected interaction graph with all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    adjacency: Vec<Vec<usize>>,
    distance: Vec<Vec<usize>>,
}

impl InteractionGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::domain(format!("edge ({a}, {b}) names an unknown agent")));
            }
            if a == b {
                return Err(Error::domain(format!("self-loop on agent {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
            nb.dedup();
        }
        let distance = (0..n)
            .map(|src| {
                let mut d = vec![usize::MAX; n];
                d[src] = 0;
                let mut queue = VecDeque::from([src]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adjacency[u] {
                        if d[v] == usize::MAX {
                            d[v] = d[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                d
            })
            .collect();
        Ok(InteractionGraph { adjacency, distance })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges).unwrap()
    }

    pub fn ring(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::new(n, &edges).unwrap()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adjacency.iter().enumerate() {
            out.extend(nb.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn distance(&self, a: usize, b: usize) -> Option<usize> {
        let d = self.distance[a][b];
        (d != usize::MAX).then_some(d)
    }

    /// Agents within `k` hops of `agent`, the agent included.
    pub fn k_hop(&self, agent: usize, k: usize) -> Result<AgentSet> {
        if agent >= self.len() {
            return Err(Error::domain(format!("unknown agent index {agent}")));
        }
        Ok(self.distance[agent]
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d <= k)
            .map(|(j, _)| j)
            .collect())
    }

    /// Largest hop distance; `None` for a disconnected graph.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for row in &self.distance {
            for &d in row {
                if d == usize::MAX {
                    return None;
                }
                best = best.max(d);
            }
        }
        Some(best)
    }
}

/// An [`Mmdp`] with factored dynamics whose factor scopes respect an
/// interaction graph.
#[derive(Debug, Clone)]
pub struct FactoredMmdp {
    model: Mmdp,
    graph: InteractionGraph,
}

impl FactoredMmdp {
    pub fn new(model: Mmdp, graph: InteractionGraph) -> Result<Self> {
        if graph.len() != model.n_agents() {
            return Err(Error::domain("interaction graph size differs from the agent count"));
        }
        let Dynamics::Factored { factors, .. } = model.dynamics() else {
            return Err(Error::domain("networked approximation needs factored dynamics"));
        };
        for f in factors {
            let closed = graph.k_hop(f.agent(), 1)?;
            if let Some(&j) = f.scope().iter().find(|&&j| !closed.contains(j)) {
                return Err(Error::domain(format!(
                    "factor of {} depends on non-neighbour {}",
                    model.agents()[f.agent()],
                    model.agents()[j]
                )));
            }
        }
        if matches!(model.admissibility(), Admissibility::Joint(_)) {
            return Err(Error::domain("networked approximation needs per-agent admissibility"));
        }
        Ok(FactoredMmdp { model, graph })
    }

    pub fn model(&self) -> &Mmdp {
        &self.model
    }

    pub fn graph(&self) -> &InteractionGraph {
        &self.graph
    }

    pub fn block(&self, agent: usize, k: usize) -> Result<Block> {
        Block::new(&self.model, self.graph.k_hop(agent, k)?, agent, k)
    }
}

/// Split of the agents into a neighbourhood ball and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    agent: usize,
    k: usize,
    ball: AgentSet,
    members: Vec<usize>,
    outside: Vec<usize>,
    states: JointSpace,
    actions: JointSpace,
    outside_states: JointSpace,
    outside_actions: JointSpace,
}

impl Block {
    fn new(m: &Mmdp, ball: AgentSet, agent: usize, k: usize) -> Result<Self> {
        let n = m.n_agents();
        let members = ball.to_vec();
        let outside: Vec<usize> = (0..n).filter(|&j| !ball.contains(j)).collect();
        let sr = m.state_space().radices();
        let ar = m.action_space().radices();
        Ok(Block {
            agent,
            k,
            ball,
            states: JointSpace::new(members.iter().map(|&j| sr[j]).collect())?,
            actions: JointSpace::new(members.iter().map(|&j| ar[j]).collect())?,
            outside_states: JointSpace::new(outside.iter().map(|&j| sr[j]).collect())?,
            outside_actions: JointSpace::new(outside.iter().map(|&j| ar[j]).collect())?,
            members,
            outside,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ball(&self) -> AgentSet {
        self.ball
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn outside(&self) -> &[usize] {
        &self.outside
    }

    pub fn state_space(&self) -> &JointSpace {
        &self.states
    }

    pub fn action_space(&self) -> &JointSpace {
        &self.actions
    }

    pub fn outside_state_space(&self) -> &JointSpace {
        &self.outside_states
    }

    pub fn outside_action_space(&self) -> &JointSpace {
        &self.outside_actions
    }

    /// Block index of the ball components of a full tuple.
    pub fn project_state(&self, full: &[usize]) -> usize {
        project(&self.states, &self.members, full)
    }

    pub fn project_action(&self, full: &[usize]) -> usize {
        project(&self.actions, &self.members, full)
    }

    pub fn project_outside_state(&self, full: &[usize]) -> usize {
        project(&self.outside_states, &self.outside, full)
    }

    /// Full tuple from ball and outside components.
    pub fn merge(&self, ball_part: &[usize], outside_part: &[usize]) -> Vec<usize> {
        let mut full = vec![0; self.members.len() + self.outside.len()];
        for (pos, &j) in self.members.iter().enumerate() {
            full[j] = ball_part[pos];
        }
        for (pos, &j) in self.outside.iter().enumerate() {
            full[j] = outside_part[pos];
        }
        full
    }
}

fn project(space: &JointSpace, agents: &[usize], full: &[usize]) -> usize {
    agents
        .iter()
        .enumerate()
        .map(|(pos, &j)| full[j] * space.stride(pos))
        .sum()
}

/// Callback weight `ω(agent, joint state, joint action)`.
pub type WeightFn = dyn Fn(usize, &[usize], &[usize]) -> f64 + Send + Sync;

/// Weights over out-of-neighbourhood configurations given the block
/// configuration.
#[derive(Clone, Default)]
pub enum WeightScheme {
    /// Uniform over all outside state and action configurations.
    #[default]
    Uniform,
    /// All mass on the outside components of one joint configuration.
    PointMass { state: Vec<usize>, action: Vec<usize> },
    /// Arbitrary weights; for each block configuration they must be
    /// non-negative and sum to one over the outside configurations.
    Custom(Arc<WeightFn>),
}

impl fmt::Debug for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Uniform => f.write_str("Uniform"),
            WeightScheme::PointMass { state, action } => f
                .debug_struct("PointMass")
                .field("state", state)
                .field("action", action)
                .finish(),
            WeightScheme::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

pub(crate) const WEIGHT_TOLERANCE: f64 = 1e-9;

impl WeightScheme {
    /// Marginal weight on each outside state configuration for one block
    /// configuration. Outside actions integrate out because block
    /// transitions and the unsafe indicator do not depend on them.
    pub(crate) fn outside_state_weights(
        &self,
        block: &Block,
        ball_state: &[usize],
        ball_action: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        let n_out = block.outside_states.len();
        match self {
            WeightScheme::Uniform => {
                let w = 1.0 / n_out as f64;
                Ok((0..n_out).map(|o| (o, w)).collect())
            }
            WeightScheme::PointMass { state, action } => {
                let n = block.members.len() + block.outside.len();
                if state.len() != n || action.len() != n {
                    return Err(Error::domain("point-mass configuration has the wrong arity"));
                }
                let bad = block
                    .outside
                    .iter()
                    .any(|&j| state[j] >= block_radix(block, j, true) || action[j] >= block_radix(block, j, false));
                if bad {
                    return Err(Error::domain("point-mass configuration out of range"));
                }
                Ok(vec![(block.project_outside_state(state), 1.0)])
            }
            WeightScheme::Custom(f) => {
                let mut acc = vec![0.0; n_out];
                let mut total = 0.0;
                let mut os = vec![0; block.outside.len()];
                let mut oa = vec![0; block.outside.len()];
                for o in 0..n_out {
                    block.outside_states.decode_into(o, &mut os);
                    let full_s = block.merge(ball_state, &os);
                    for x in 0..block.outside_actions.len() {
                        block.outside_actions.decode_into(x, &mut oa);
                        let full_a = block.merge(ball_action, &oa);
                        let w = f(block.agent, &full_s, &full_a);
                        if !(w >= 0.0) {
                            return Err(Error::invariant(format!("negative or undefined weight {w}")));
                        }
                        acc[o] += w;
                        total += w;
                    }
                }
                if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::invariant(format!(
                        "weights for block configuration {ball_state:?}/{ball_action:?} sum to {total}"
                    )));
                }
                Ok(acc.into_iter().enumerate().filter(|&(_, w)| w > 0.0).collect())
            }
        }
    }

    /// Outside configurations enumerated per block configuration.
    pub(crate) fn work_per_block(&self, block: &Block) -> u128 {
        match self {
            WeightScheme::Uniform => block.outside_states.len() as u128,
            WeightScheme::PointMass { .. } => 1,
            WeightScheme::Custom(_) => block.outside_states.len() as u128 * block.outside_actions.len() as u128,
        }
    }
}

fn block_radix(block: &Block, agent: usize, state: bool) -> usize {
    let pos = block.outside.iter().position(|&j| j == agent).unwrap();
    if state {
        block.outside_states.radices()[pos]
    } else {
        block.outside_actions.radices()[pos]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_hop_examples() {
        let g = InteractionGraph::path(3);
        assert_eq!(g.k_hop(1, 0).unwrap(), AgentSet::singleton(1));
        assert_eq!(g.k_hop(1, 1).unwrap(), AgentSet::full(3));
        let g4 = InteractionGraph::path(4);
        assert_eq!(g4.k_hop(0, 2).unwrap().to_vec(), vec![0, 1, 2]);
        assert!(g4.k_hop(7, 1).is_err());
        assert_eq!(g4.diameter(), Some(3));
        assert_eq!(InteractionGraph::ring(6).diameter(), Some(3));
    }

    #[test]
    fn disconnected_graph_has_no_diameter() {
        let g = InteractionGraph::new(3, &[(0, 1)]).unwrap();
        assert_eq!(g.diameter(), None);
        assert_eq!(g.k_hop(2, 5).unwrap(), AgentSet::singleton(2));
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(InteractionGraph::new(2, &[(0, 2)]).is_err());
        assert!(InteractionGraph::new(2, &[(1, 1)]).is_err());
    }

    #[test]
    fn balls_are_nested() {
        let g = InteractionGraph::ring(5);
        for i in 0..5 {
            for k in 0..4 {
                assert!(g.k_hop(i, k).unwrap().is_subset(g.k_hop(i, k + 1).unwrap()));
            }
        }
    }
}
