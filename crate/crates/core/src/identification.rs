//! Screening of candidate responsible agents by single-agent action
//! substitution at each decision stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mmdp, Trajectory};
use crate::reachability::{compute_q, completions, QTable};
use crate::space::AgentSet;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalImprovement {
    pub agent: usize,
    pub stage: usize,
    /// Best alternative local action, if the agent has any.
    pub alternative: Option<usize>,
    pub improvement: f64,
}

/// Largest drop of `Q(ρ^t, ·, T−t)` obtainable by changing only `agent`'s
/// action, floored at zero.
pub fn marginal_improvement(q: &QTable, tr: &Trajectory, agent: usize, t: usize) -> Result<MarginalImprovement> {
    let big_t = tr.horizon();
    if big_t < 2 || t > big_t - 2 || tr.actions().len() + 1 != big_t {
        return Err(Error::domain(format!("stage {t} is not a decision stage")));
    }
    if agent >= q.action_space().dims() {
        return Err(Error::domain(format!("agent index {agent} out of range")));
    }
    let to_go = big_t - t;
    let s = q.state_space().encode(tr.state(t))?;
    let observed = q.action_space().encode(tr.action(t))?;
    let base = q.value(s, observed, to_go)?;
    let space = q.action_space();
    let own = space.component(observed, agent);
    let mut best: Option<(usize, f64)> = None;
    for a in completions(q, s, observed, AgentSet::singleton(agent)) {
        if space.component(a, agent) == own {
            continue;
        }
        let gain = base - q.value(s, a, to_go)?;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((a, gain));
        }
    }
    Ok(MarginalImprovement {
        agent,
        stage: t,
        alternative: best.map(|(a, _)| space.component(a, agent)),
        improvement: best.map_or(0.0, |(_, g)| g.max(0.0)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub responsible: AgentSet,
    pub improvements: Vec<MarginalImprovement>,
}

/// Agents with an improvement of at least `epsilon` at some decision stage.
pub fn identify_with_q(q: &QTable, tr: &Trajectory, epsilon: f64) -> Result<Identification> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = q.action_space().dims();
    let mut improvements = Vec::new();
    let mut responsible = AgentSet::empty();
    for t in tr.decision_stages() {
        for i in 0..n {
            let mi = marginal_improvement(q, tr, i, t)?;
            if mi.improvement >= epsilon {
                responsible = responsible.with(i);
            }
            improvements.push(mi);
        }
    }
    Ok(Identification {
        responsible,
        improvements,
    })
}

pub fn identify_responsible(m: &Mmdp, tr: &Trajectory, epsilon: f64) -> Result<AgentSet> {
    let q = compute_q(m, tr.horizon())?;
    Ok(identify_with_q(&q, tr, epsilon)?.responsible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Admissibility, Dynamics, Factor, UnsafeSpec};

    /// Agent 0 at cell 0 moves (action 1) into cell 1 where agent 1 sits, or
    /// stops (action 0). Agent 1 can only stop.
    fn blocker() -> Mmdp {
        let counts = [2, 2];
        let mut f0 = Factor::new(0, vec![0], &counts, 2).unwrap();
        let mut f1 = Factor::new(1, vec![1], &counts, 1).unwrap();
        for s in 0..2 {
            f0.set_row(&[s], 0, vec![(s, 1.0)]).unwrap();
            f0.set_row(&[s], 1, vec![(1, 1.0)]).unwrap();
            f1.set_row(&[s], 0, vec![(s, 1.0)]).unwrap();
        }
        Mmdp::new(
            vec!["mover".into(), "parked".into()],
            vec![vec!["c0".into(), "c1".into()]; 2],
            vec![vec!["stop".into(), "go".into()], vec!["stop".into()]],
            Admissibility::All,
            Dynamics::Factored {
                factors: vec![f0, f1],
                freeze_unsafe: true,
            },
            UnsafeSpec::Collision { pairs: None },
        )
        .unwrap()
    }

    #[test]
    fn improvement_of_stopping() {
        let m = blocker();
        let tr = Trajectory::new(vec![vec![0, 1], vec![1, 1]], vec![vec![1, 0]], true);
        let id = identify_with_q(&compute_q(&m, 2).unwrap(), &tr, DEFAULT_EPSILON).unwrap();
        assert_eq!(id.responsible, AgentSet::singleton(0));
        let mover = &id.improvements[0];
        assert_eq!(mover.alternative, Some(0));
        assert_eq!(mover.improvement, 1.0);
        let parked = &id.improvements[1];
        assert_eq!(parked.alternative, None);
        assert_eq!(parked.improvement, 0.0);
    }

    #[test]
    fn nonpositive_epsilon_rejected() {
        let m = blocker();
        let tr = Trajectory::new(vec![vec![0, 1], vec![1, 1]], vec![vec![1, 0]], true);
        assert!(identify_responsible(&m, &tr, 0.0).is_err());
    }
}
