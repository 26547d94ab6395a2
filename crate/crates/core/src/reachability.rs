//! Finite-horizon probability of reaching the unsafe set, safe joint
//! actions, and counterfactual coalition utilities.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Mmdp, Trajectory};
use crate::space::{AgentSet, JointSpace};

pub mod oracle;

/// Default upper bound on stored Q cells (admissible pairs times stages).
pub const DEFAULT_CELL_BUDGET: u128 = 100_000_000;

/// Admissible joint actions of every joint state in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionIndex {
    offsets: Vec<usize>,
    actions: Vec<usize>,
}

impl ActionIndex {
    pub fn build(m: &Mmdp) -> Self {
        let n = m.state_space().len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut actions = Vec::new();
        offsets.push(0);
        for s in 0..n {
            actions.extend(m.admissible_actions(s));
            offsets.push(actions.len());
        }
        ActionIndex { offsets, actions }
    }

    pub fn actions(&self, s: usize) -> &[usize] {
        &self.actions[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn slot(&self, s: usize, a: usize) -> Option<usize> {
        self.actions(s)
            .binary_search(&a)
            .ok()
            .map(|pos| self.offsets[s] + pos)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// Total number of admissible `(s, a)` pairs.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// `Q(s, a, t)` for every joint state, admissible joint action and
/// `t ∈ 0..=horizon`.
#[derive(Debug, Clone)]
pub struct QTable {
    horizon: usize,
    state_space: JointSpace,
    action_space: JointSpace,
    index: ActionIndex,
    unsafe_mask: Vec<bool>,
    values: Vec<Vec<f64>>,
    best: Vec<Vec<f64>>,
}

impl QTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_space(&self) -> &JointSpace {
        &self.state_space
    }

    pub fn action_space(&self) -> &JointSpace {
        &self.action_space
    }

    pub fn actions(&self, s: usize) -> &[usize] {
        self.index.actions(s)
    }

    pub fn action_index(&self) -> &ActionIndex {
        &self.index
    }

    pub fn is_unsafe(&self, s: usize) -> bool {
        self.unsafe_mask[s]
    }

    /// Stored value; `None` when `a` is not admissible at `s` or `t` exceeds
    /// the horizon.
    pub fn get(&self, s: usize, a: usize, t: usize) -> Option<f64> {
        if t > self.horizon || !self.state_space.contains(s) {
            return None;
        }
        self.index.slot(s, a).map(|slot| self.values[t][slot])
    }

    pub fn value(&self, s: usize, a: usize, t: usize) -> Result<f64> {
        self.get(s, a, t).ok_or_else(|| {
            Error::domain(format!(
                "no Q entry for state {s}, joint action {a}, stage {t} (horizon {})",
                self.horizon
            ))
        })
    }

    /// `min_a Q(s, a, t)`; 1 for unsafe states.
    pub fn min_value(&self, s: usize, t: usize) -> f64 {
        self.best[t][s]
    }

    /// Number of stored values.
    pub fn cells(&self) -> usize {
        self.index.len() * (self.horizon + 1)
    }

    /// Approximate resident size of the table in bytes.
    pub fn bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let u = std::mem::size_of::<usize>();
        self.cells() * f
            + self.best.len() * self.state_space.len() * f
            + (self.index.len() + self.index.offsets.len()) * u
            + self.unsafe_mask.len()
    }
}

pub fn compute_q(m: &Mmdp, horizon: usize) -> Result<QTable> {
    compute_q_with_budget(m, horizon, DEFAULT_CELL_BUDGET)
}

/// Backward recursion `Q(s,a,t) = Σ Pr(s'|s,a) min_a' Q(s',a',t-1)` with
/// `Q(s,a,0) = 1{s ∈ Ŝ}` and unsafe states pinned to 1.
pub fn compute_q_with_budget(m: &Mmdp, horizon: usize, cell_budget: u128) -> Result<QTable> {
    let n_states = m.state_space().len();
    let stages = horizon as u128 + 1;
    let upper = n_states as u128 * m.action_space().len() as u128 * stages;
    if upper > cell_budget && n_states as u128 * stages > cell_budget {
        // even one action per state would not fit
        return Err(Error::ResourceGuard {
            what: "Q table state-stage cells",
            required: n_states as u128 * stages,
            budget: cell_budget,
        });
    }
    let index = ActionIndex::build(m);
    let required = index.len() as u128 * stages;
    if required > cell_budget {
        return Err(Error::ResourceGuard {
            what: "Q table cells",
            required,
            budget: cell_budget,
        });
    }
    let unsafe_mask = m.unsafe_mask();
    for s in 0..n_states {
        if !unsafe_mask[s] && index.actions(s).is_empty() {
            return Err(Error::domain(format!(
                "safe state {} has no admissible joint action",
                m.format_state(s)
            )));
        }
    }

    let mut values = Vec::with_capacity(horizon + 1);
    let mut best = Vec::with_capacity(horizon + 1);
    let stage0: Vec<f64> = (0..n_states)
        .flat_map(|s| {
            let v = if unsafe_mask[s] { 1.0 } else { 0.0 };
            std::iter::repeat_n(v, index.actions(s).len())
        })
        .collect();
    best.push(minima(&index, &unsafe_mask, &stage0));
    values.push(stage0);

    for _t in 1..=horizon {
        let prev = best.last().unwrap();
        let rows: Vec<Result<Vec<f64>>> = (0..n_states)
            .into_par_iter()
            .map(|s| {
                let acts = index.actions(s);
                if unsafe_mask[s] {
                    return Ok(vec![1.0; acts.len()]);
                }
                let mut succ = Vec::new();
                acts.iter()
                    .map(|&a| {
                        m.successors_into(s, a, &mut succ);
                        if succ.is_empty() {
                            return Err(Error::domain(format!(
                                "no transition row for {} / {}",
                                m.format_state(s),
                                m.format_action(a)
                            )));
                        }
                        let v: f64 = succ.iter().map(|&(t, p)| p * prev[t]).sum();
                        Ok(v.clamp(0.0, 1.0))
                    })
                    .collect()
            })
            .collect();
        let mut stage = Vec::with_capacity(index.len());
        for row in rows {
            stage.extend(row?);
        }
        best.push(minima(&index, &unsafe_mask, &stage));
        values.push(stage);
    }

    Ok(QTable {
        horizon,
        state_space: m.state_space().clone(),
        action_space: m.action_space().clone(),
        index,
        unsafe_mask,
        values,
        best,
    })
}

fn minima(index: &ActionIndex, unsafe_mask: &[bool], stage: &[f64]) -> Vec<f64> {
    (0..unsafe_mask.len())
        .map(|s| {
            if unsafe_mask[s] {
                1.0
            } else {
                stage[index.range(s)].iter().copied().fold(f64::INFINITY, f64::min)
            }
        })
        .collect()
}

/// Admissible joint action minimizing `Q(s, ·, stages_to_go)`, lowest index on
/// ties.
pub fn safe_joint_action(q: &QTable, s: usize, stages_to_go: usize) -> Result<usize> {
    if stages_to_go == 0 || stages_to_go > q.horizon {
        return Err(Error::domain(format!(
            "stages_to_go must lie in 1..={}, got {stages_to_go}",
            q.horizon
        )));
    }
    if !q.state_space.contains(s) {
        return Err(Error::domain(format!("joint state {s} does not exist")));
    }
    argmin(q, s, stages_to_go, q.actions(s).iter().copied())
        .ok_or_else(|| Error::domain(format!("joint state {s} has no admissible action")))
}

fn argmin(q: &QTable, s: usize, t: usize, candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for a in candidates {
        let v = q.get(s, a, t)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

fn stage_indices(q: &QTable, tr: &Trajectory, t: usize) -> Result<(usize, usize, usize)> {
    let big_t = tr.horizon();
    if big_t < 2 || t > big_t - 2 {
        return Err(Error::domain(format!(
            "stage {t} outside 0..={} for a trajectory of {big_t} states",
            big_t as isize - 2
        )));
    }
    if tr.actions().len() + 1 != big_t {
        return Err(Error::domain("trajectory needs one action per transition"));
    }
    let to_go = big_t - t;
    if to_go > q.horizon {
        return Err(Error::domain(format!(
            "Q horizon {} too short for {to_go} stages to go",
            q.horizon
        )));
    }
    let s = q.state_space.encode(tr.state(t))?;
    let a = q.action_space.encode(tr.action(t))?;
    Ok((s, a, to_go))
}

/// Candidates at `s` whose components outside `free` equal those of `observed`.
pub(crate) fn completions<'a>(
    q: &'a QTable,
    s: usize,
    observed: usize,
    free: AgentSet,
) -> impl Iterator<Item = usize> + 'a {
    let space = &q.action_space;
    let dims = space.dims();
    q.actions(s).iter().copied().filter(move |&a| {
        (0..dims).all(|j| free.contains(j) || space.component(a, j) == space.component(observed, j))
    })
}

/// Joint action at stage `t` in which the coalition re-optimizes
/// `Q(ρ^t, ·, T−t)` while the other agents keep their observed actions.
pub fn counterfactual_action(q: &QTable, tr: &Trajectory, coalition: AgentSet, t: usize) -> Result<usize> {
    let (s, observed, to_go) = stage_indices(q, tr, t)?;
    if coalition.is_empty() {
        if q.index.slot(s, observed).is_none() {
            return Err(Error::domain(format!("observed action at stage {t} is not admissible")));
        }
        return Ok(observed);
    }
    argmin(q, s, to_go, completions(q, s, observed, coalition)).ok_or_else(|| {
        Error::domain(format!(
            "coalition {coalition:?} has no admissible completion at stage {t}"
        ))
    })
}

/// `r(C_𝒴^t) = Q(ρ^t, ã^t, T−t)`.
pub fn counterfactual_utility(q: &QTable, tr: &Trajectory, coalition: AgentSet, t: usize) -> Result<f64> {
    let a = counterfactual_action(q, tr, coalition, t)?;
    let (s, _, to_go) = stage_indices(q, tr, t)?;
    q.value(s, a, to_go)
}

/// Sum of counterfactual utilities over the decision stages plus the
/// coalition-independent terminal indicator `1{ρ^{T-1} ∈ Ŝ}`.
pub fn coalition_utility(q: &QTable, tr: &Trajectory, coalition: AgentSet) -> Result<f64> {
    let big_t = tr.horizon();
    if big_t == 0 {
        return Err(Error::domain("empty trajectory"));
    }
    let mut total = 0.0;
    for t in tr.decision_stages() {
        total += counterfactual_utility(q, tr, coalition, t)?;
    }
    let last = q.state_space.encode(tr.state(big_t - 1))?;
    if q.is_unsafe(last) {
        total += 1.0;
    }
    Ok(total)
}

/// Deterministic non-stationary joint policy keyed by `(joint state, stage)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicySpec {
    horizon: usize,
    actions: BTreeMap<(usize, usize), usize>,
}

impl PolicySpec {
    pub fn new(horizon: usize) -> Self {
        PolicySpec {
            horizon,
            actions: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn insert(&mut self, s: usize, stage: usize, a: usize) {
        self.actions.insert((s, stage), a);
    }

    pub fn get(&self, s: usize, stage: usize) -> Option<usize> {
        self.actions.get(&(s, stage)).copied()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Greedy policy over the full horizon: at stage `t` play
/// `safe_joint_action(s, H − t)`.
pub fn safe_policy(q: &QTable) -> Result<PolicySpec> {
    let mut policy = PolicySpec::new(q.horizon);
    for stage in 0..q.horizon {
        for s in 0..q.state_space.len() {
            if q.actions(s).is_empty() {
                continue;
            }
            policy.insert(s, stage, safe_joint_action(q, s, q.horizon - stage)?);
        }
    }
    Ok(policy)
}

/// Probability of entering the unsafe set within the policy horizon when
/// starting from `s0`, by forward propagation.
pub fn policy_reach_probability(m: &Mmdp, policy: &PolicySpec, s0: usize) -> Result<f64> {
    let unsafe_mask = m.unsafe_mask();
    if unsafe_mask[s0] {
        return Ok(1.0);
    }
    let mut dist: BTreeMap<usize, f64> = BTreeMap::from([(s0, 1.0)]);
    let mut hit = 0.0;
    let mut succ = Vec::new();
    for stage in 0..policy.horizon {
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        for (&s, &p) in &dist {
            let a = policy
                .get(s, stage)
                .ok_or_else(|| Error::domain(format!("policy undefined at state {s}, stage {stage}")))?;
            if !m.is_admissible(s, a) {
                return Err(Error::domain("policy plays an inadmissible action"));
            }
            m.successors_into(s, a, &mut succ);
            for &(t, q) in &succ {
                if unsafe_mask[t] {
                    hit += p * q;
                } else {
                    *next.entry(t).or_insert(0.0) += p * q;
                }
            }
        }
        dist = next;
    }
    Ok(hit)
}
