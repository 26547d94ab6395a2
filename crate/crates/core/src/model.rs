//! Multi-agent MDP model, observed trajectories and their validation.
//!
//! An [`Mmdp`] is a product of per-agent finite state and action sets with a
//! joint transition function and a set of unsafe joint states. Transitions are
//! either sparse joint rows or per-agent factors whose product gives the joint
//! kernel. Construction only checks shapes; probabilistic well-formedness is
//! reported by [`validate_mmdp`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::JointSpace;

/// Tolerance for outgoing probability mass of a transition row.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Which joint actions may be taken in which joint states. Admissibility is
/// stage-invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Admissibility {
    /// Every joint action everywhere.
    All,
    /// `lists[agent][local_state]` holds the sorted admissible local actions;
    /// the joint admissible set is their product.
    PerAgent(Vec<Vec<Vec<usize>>>),
    /// Explicit sorted joint action lists; joint states not listed admit every
    /// joint action.
    Joint(BTreeMap<usize, Vec<usize>>),
}

/// A rule `agent ∈ states` used by [`UnsafeSpec::Forbidden`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForbiddenRule {
    pub agent: usize,
    pub states: BTreeSet<usize>,
}

/// Identifies the unsafe joint states.
#[derive(Debug, Clone, PartialEq)]
pub enum UnsafeSpec {
    /// Joint-state patterns; `None` components match anything.
    Explicit(Vec<Vec<Option<usize>>>),
    /// Unsafe iff two agents occupy the same location (same state label). When
    /// `pairs` is given only those agent pairs are checked.
    Collision { pairs: Option<Vec<(usize, usize)>> },
    /// Unsafe iff any rule matches.
    Forbidden(Vec<ForbiddenRule>),
}

/// Per-agent transition factor `Pr_i(s_i' | s_scope, a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    agent: usize,
    scope: Vec<usize>,
    context: JointSpace,
    n_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Factor {
    /// `scope` lists the agents whose current states condition the factor; it
    /// must contain `agent`. `state_counts` gives every agent's state count.
    pub fn new(
        agent: usize,
        mut scope: Vec<usize>,
        state_counts: &[usize],
        n_actions: usize,
    ) -> Result<Self> {
        scope.sort_unstable();
        scope.dedup();
        if !scope.contains(&agent) {
            return Err(Error::domain(format!(
                "factor scope of agent {agent} must contain the agent itself"
            )));
        }
        if let Some(&bad) = scope.iter().find(|&&j| j >= state_counts.len()) {
            return Err(Error::domain(format!("factor scope names unknown agent {bad}")));
        }
        let context = JointSpace::new(scope.iter().map(|&j| state_counts[j]).collect())?;
        let rows = vec![Vec::new(); context.len() * n_actions];
        Ok(Factor {
            agent,
            scope,
            context,
            n_actions,
            rows,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn context_space(&self) -> &JointSpace {
        &self.context
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Position of the owning agent inside the scope tuple.
    pub fn own_position(&self) -> usize {
        self.scope.iter().position(|&j| j == self.agent).unwrap()
    }

    /// Replaces the distribution for a scope-local context and action. Entries
    /// for the same next state are merged; the row is kept sorted.
    pub fn set_row(&mut self, context: &[usize], action: usize, row: Vec<(usize, f64)>) -> Result<()> {
        let c = self.context.encode(context)?;
        if action >= self.n_actions {
            return Err(Error::domain(format!("factor action {action} out of range")));
        }
        self.rows[c * self.n_actions + action] = merge_row(row);
        Ok(())
    }

    pub fn row_at(&self, context_index: usize, action: usize) -> &[(usize, f64)] {
        &self.rows[context_index * self.n_actions + action]
    }

    /// Row selected by the scope components of a full joint-state tuple.
    pub fn row(&self, joint_state: &[usize], action: usize) -> &[(usize, f64)] {
        let c: usize = self
            .scope
            .iter()
            .enumerate()
            .map(|(pos, &j)| joint_state[j] * self.context.stride(pos))
            .sum();
        self.row_at(c, action)
    }
}

fn merge_row(row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (s, p) in row {
        *acc.entry(s).or_insert(0.0) += p;
    }
    acc.into_iter().collect()
}

/// Sparse joint transition rows keyed by `(joint state, joint action)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointTransitions {
    rows: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
}

impl JointTransitions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds probability mass `p` to `s --a--> s2`.
    pub fn insert(&mut self, s: usize, a: usize, s2: usize, p: f64) {
        let row = self.rows.entry((s, a)).or_default();
        match row.binary_search_by_key(&s2, |&(t, _)| t) {
            Ok(pos) => row[pos].1 += p,
            Err(pos) => row.insert(pos, (s2, p)),
        }
    }

    pub fn row(&self, s: usize, a: usize) -> Option<&[(usize, f64)]> {
        self.rows.get(&(s, a)).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, &[(usize, f64)])> {
        self.rows.iter().map(|(&(s, a), r)| (s, a, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Transition function of an [`Mmdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Joint(JointTransitions),
    /// Product of per-agent factors, one per agent in agent order. With
    /// `freeze_unsafe` every unsafe joint state is a self-loop (colliding
    /// vehicles stop where they are) and the product applies to safe states.
    Factored {
        factors: Vec<Factor>,
        freeze_unsafe: bool,
    },
}

/// A multi-agent Markov decision process with an unsafe set.
#[derive(Debug, Clone)]
pub struct Mmdp {
    agents: Vec<String>,
    state_labels: Vec<Vec<String>>,
    action_labels: Vec<Vec<String>>,
    state_space: JointSpace,
    action_space: JointSpace,
    admissibility: Admissibility,
    dynamics: Dynamics,
    unsafe_spec: UnsafeSpec,
    // per-agent state -> shared location symbol, for the collision predicate
    location_ids: Vec<Vec<usize>>,
}

impl Mmdp {
    pub fn new(
        agents: Vec<String>,
        state_labels: Vec<Vec<String>>,
        action_labels: Vec<Vec<String>>,
        admissibility: Admissibility,
        dynamics: Dynamics,
        unsafe_spec: UnsafeSpec,
    ) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::domain("an MMDP needs at least one agent"));
        }
        if n > crate::space::AgentSet::MAX_AGENTS {
            return Err(Error::domain("at most 64 agents are supported"));
        }
        if state_labels.len() != n || action_labels.len() != n {
            return Err(Error::domain(
                "state and action label lists must have one entry per agent",
            ));
        }
        for i in 0..n {
            if state_labels[i].is_empty() || action_labels[i].is_empty() {
                return Err(Error::domain(format!(
                    "agent {} has an empty state or action set",
                    agents[i]
                )));
            }
        }
        let state_counts: Vec<usize> = state_labels.iter().map(Vec::len).collect();
        let action_counts: Vec<usize> = action_labels.iter().map(Vec::len).collect();
        let state_space = JointSpace::new(state_counts.clone())?;
        let action_space = JointSpace::new(action_counts.clone())?;

        match &admissibility {
            Admissibility::All => {}
            Admissibility::PerAgent(lists) => {
                if lists.len() != n {
                    return Err(Error::domain("per-agent admissibility needs one table per agent"));
                }
                for (i, table) in lists.iter().enumerate() {
                    if table.len() != state_counts[i] {
                        return Err(Error::domain(format!(
                            "admissibility table of agent {} has {} rows, expected {}",
                            agents[i],
                            table.len(),
                            state_counts[i]
                        )));
                    }
                    for acts in table {
                        if acts.iter().any(|&a| a >= action_counts[i]) {
                            return Err(Error::domain(format!(
                                "admissibility of agent {} names an unknown action",
                                agents[i]
                            )));
                        }
                        if acts.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(Error::domain("admissible action lists must be sorted and distinct"));
                        }
                    }
                }
            }
            Admissibility::Joint(map) => {
                for (&s, acts) in map {
                    if !state_space.contains(s) || acts.iter().any(|&a| !action_space.contains(a)) {
                        return Err(Error::domain("joint admissibility references an invalid index"));
                    }
                    if acts.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::domain("admissible action lists must be sorted and distinct"));
                    }
                }
            }
        }

        if let Dynamics::Factored { factors, .. } = &dynamics {
            if factors.len() != n {
                return Err(Error::domain("factored dynamics need one factor per agent"));
            }
            for (i, f) in factors.iter().enumerate() {
                if f.agent != i || f.n_actions != action_counts[i] {
                    return Err(Error::domain(format!("factor {i} does not match agent {}", agents[i])));
                }
                let expected: Vec<usize> = f.scope.iter().map(|&j| state_counts[j]).collect();
                if f.context.radices() != expected.as_slice() {
                    return Err(Error::domain(format!("factor {i} has a mismatched context space")));
                }
            }
        }

        match &unsafe_spec {
            UnsafeSpec::Explicit(patterns) => {
                for p in patterns {
                    if p.len() != n
                        || p.iter().zip(&state_counts).any(|(c, &r)| matches!(c, Some(v) if *v >= r))
                    {
                        return Err(Error::domain("unsafe pattern does not fit the joint state space"));
                    }
                }
            }
            UnsafeSpec::Collision { pairs: Some(pairs) } => {
                if pairs.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
                    return Err(Error::domain("collision pairs must name two distinct agents"));
                }
            }
            UnsafeSpec::Collision { pairs: None } => {}
            UnsafeSpec::Forbidden(rules) => {
                for r in rules {
                    if r.agent >= n || r.states.iter().any(|&s| s >= state_counts[r.agent]) {
                        return Err(Error::domain("forbidden rule references an invalid index"));
                    }
                }
            }
        }

        let mut symbols: HashMap<&str, usize> = HashMap::new();
        let location_ids = state_labels
            .iter()
            .map(|labels| {
                labels
                    .iter()
                    .map(|l| {
                        let next = symbols.len();
                        *symbols.entry(l.as_str()).or_insert(next)
                    })
                    .collect()
            })
            .collect();

        Ok(Mmdp {
            agents,
            state_labels,
            action_labels,
            state_space,
            action_space,
            admissibility,
            dynamics,
            unsafe_spec,
            location_ids,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a == id)
    }

    pub fn state_labels(&self, agent: usize) -> &[String] {
        &self.state_labels[agent]
    }

    pub fn action_labels(&self, agent: usize) -> &[String] {
        &self.action_labels[agent]
    }

    pub fn state_space(&self) -> &JointSpace {
        &self.state_space
    }

    pub fn action_space(&self) -> &JointSpace {
        &self.action_space
    }

    pub fn admissibility(&self) -> &Admissibility {
        &self.admissibility
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn unsafe_spec(&self) -> &UnsafeSpec {
        &self.unsafe_spec
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if self.state_space.contains(s) {
            Ok(())
        } else {
            Err(Error::domain(format!("joint state {s} does not exist")))
        }
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if self.action_space.contains(a) {
            Ok(())
        } else {
            Err(Error::domain(format!("joint action {a} does not exist")))
        }
    }

    /// Whether the joint state with dense index `s` is unsafe.
    pub fn is_unsafe(&self, s: usize) -> Result<bool> {
        self.check_state(s)?;
        Ok(self.is_unsafe_tuple(&self.state_space.decode(s)))
    }

    /// Unsafe predicate on a per-agent state tuple (assumed in range).
    pub fn is_unsafe_tuple(&self, s: &[usize]) -> bool {
        match &self.unsafe_spec {
            UnsafeSpec::Explicit(patterns) => patterns.iter().any(|p| {
                p.iter()
                    .zip(s)
                    .all(|(c, &v)| c.is_none_or(|want| want == v))
            }),
            UnsafeSpec::Collision { pairs: None } => {
                let n = s.len();
                (0..n).any(|i| {
                    ((i + 1)..n).any(|j| self.location_ids[i][s[i]] == self.location_ids[j][s[j]])
                })
            }
            UnsafeSpec::Collision { pairs: Some(pairs) } => pairs
                .iter()
                .any(|&(i, j)| self.location_ids[i][s[i]] == self.location_ids[j][s[j]]),
            UnsafeSpec::Forbidden(rules) => rules.iter().any(|r| r.states.contains(&s[r.agent])),
        }
    }

    /// Unsafe flag for every joint state, in dense order.
    pub fn unsafe_mask(&self) -> Vec<bool> {
        let mut parts = vec![0; self.n_agents()];
        (0..self.state_space.len())
            .map(|s| {
                self.state_space.decode_into(s, &mut parts);
                self.is_unsafe_tuple(&parts)
            })
            .collect()
    }

    /// Admissible local actions of one agent in one of its states, when
    /// admissibility is given per agent.
    pub fn local_actions(&self, agent: usize, local_state: usize) -> Option<Vec<usize>> {
        match &self.admissibility {
            Admissibility::All => Some((0..self.action_labels[agent].len()).collect()),
            Admissibility::PerAgent(lists) => Some(lists[agent][local_state].clone()),
            Admissibility::Joint(_) => None,
        }
    }

    /// Sorted admissible joint actions at `s`.
    pub fn admissible_actions(&self, s: usize) -> Vec<usize> {
        match &self.admissibility {
            Admissibility::All => (0..self.action_space.len()).collect(),
            Admissibility::Joint(map) => map
                .get(&s)
                .cloned()
                .unwrap_or_else(|| (0..self.action_space.len()).collect()),
            Admissibility::PerAgent(lists) => {
                let parts = self.state_space.decode(s);
                let per_agent: Vec<&[usize]> = parts
                    .iter()
                    .enumerate()
                    .map(|(i, &si)| lists[i][si].as_slice())
                    .collect();
                product_indices(&self.action_space, &per_agent)
            }
        }
    }

    pub fn is_admissible(&self, s: usize, a: usize) -> bool {
        match &self.admissibility {
            Admissibility::All => true,
            Admissibility::Joint(map) => map.get(&s).is_none_or(|acts| acts.binary_search(&a).is_ok()),
            Admissibility::PerAgent(lists) => {
                let sp = self.state_space.decode(s);
                let ap = self.action_space.decode(a);
                (0..self.n_agents()).all(|i| lists[i][sp[i]].binary_search(&ap[i]).is_ok())
            }
        }
    }

    /// Writes the successor distribution of `(s, a)` into `out`, sorted by
    /// next state. An empty result means no transition row is defined.
    pub fn successors_into(&self, s: usize, a: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        match &self.dynamics {
            Dynamics::Joint(t) => {
                if let Some(row) = t.row(s, a) {
                    out.extend_from_slice(row);
                }
            }
            Dynamics::Factored {
                factors,
                freeze_unsafe,
            } => {
                let sp = self.state_space.decode(s);
                if *freeze_unsafe && self.is_unsafe_tuple(&sp) {
                    out.push((s, 1.0));
                    return;
                }
                let ap = self.action_space.decode(a);
                out.push((0, 1.0));
                let mut next = Vec::new();
                for (i, f) in factors.iter().enumerate() {
                    let row = f.row(&sp, ap[i]);
                    if row.is_empty() {
                        out.clear();
                        return;
                    }
                    let stride = self.state_space.stride(i);
                    next.clear();
                    for &(idx, p) in out.iter() {
                        for &(ns, q) in row {
                            next.push((idx + ns * stride, p * q));
                        }
                    }
                    std::mem::swap(out, &mut next);
                }
            }
        }
    }

    pub fn successors(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.successors_into(s, a, &mut out);
        out
    }

    /// `Pr(s2 | s, a)`; zero for transitions without a stored entry.
    pub fn transition_prob(&self, s: usize, a: usize, s2: usize) -> Result<f64> {
        self.check_state(s)?;
        self.check_state(s2)?;
        self.check_action(a)?;
        if !self.is_admissible(s, a) {
            return Err(Error::domain(format!(
                "joint action {} is not admissible in state {}",
                self.format_action(a),
                self.format_state(s)
            )));
        }
        match &self.dynamics {
            Dynamics::Joint(t) => Ok(t
                .row(s, a)
                .and_then(|row| row.iter().find(|&&(t, _)| t == s2))
                .map_or(0.0, |&(_, p)| p)),
            Dynamics::Factored {
                factors,
                freeze_unsafe,
            } => {
                let sp = self.state_space.decode(s);
                if *freeze_unsafe && self.is_unsafe_tuple(&sp) {
                    return Ok(if s == s2 { 1.0 } else { 0.0 });
                }
                let ap = self.action_space.decode(a);
                let np = self.state_space.decode(s2);
                Ok(factors
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        f.row(&sp, ap[i])
                            .iter()
                            .find(|&&(t, _)| t == np[i])
                            .map_or(0.0, |&(_, p)| p)
                    })
                    .product())
            }
        }
    }

    /// Human-readable joint state, e.g. `(0, 1, 9)`.
    pub fn format_state(&self, s: usize) -> String {
        let parts = self.state_space.decode(s);
        let labels: Vec<&str> = parts
            .iter()
            .enumerate()
            .map(|(i, &v)| self.state_labels[i][v].as_str())
            .collect();
        format!("({})", labels.join(", "))
    }

    pub fn format_action(&self, a: usize) -> String {
        let parts = self.action_space.decode(a);
        let labels: Vec<&str> = parts
            .iter()
            .enumerate()
            .map(|(i, &v)| self.action_labels[i][v].as_str())
            .collect();
        format!("({})", labels.join(", "))
    }
}

/// Dense indices of the product of per-dimension index lists, ascending.
pub(crate) fn product_indices(space: &JointSpace, lists: &[&[usize]]) -> Vec<usize> {
    if lists.iter().any(|l| l.is_empty()) {
        return Vec::new();
    }
    let total: usize = lists.iter().map(|l| l.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut cursor = vec![0usize; lists.len()];
    loop {
        out.push(
            cursor
                .iter()
                .enumerate()
                .map(|(d, &c)| lists[d][c] * space.stride(d))
                .sum(),
        );
        let mut d = lists.len();
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            cursor[d] += 1;
            if cursor[d] < lists[d].len() {
                break;
            }
            cursor[d] = 0;
        }
    }
}

/// An observed finite path: states `0..T-1` and actions `0..T-2`, as
/// per-agent index tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    states: Vec<Vec<usize>>,
    actions: Vec<Vec<usize>>,
    violation: bool,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<usize>>, actions: Vec<Vec<usize>>, violation: bool) -> Self {
        Trajectory {
            states,
            actions,
            violation,
        }
    }

    /// Number of states `T`.
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn state(&self, t: usize) -> &[usize] {
        &self.states[t]
    }

    pub fn action(&self, t: usize) -> &[usize] {
        &self.actions[t]
    }

    /// Whether the path is presented as a safety-violation instance.
    pub fn is_violation(&self) -> bool {
        self.violation
    }

    /// Stages with an observed action, `0..=T-2`.
    pub fn decision_stages(&self) -> std::ops::Range<usize> {
        0..self.horizon().saturating_sub(1)
    }
}

/// Machine-readable class of a validation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    RowSum,
    ProbRange,
    InvalidIndex,
    MissingRow,
    NoAdmissibleAction,
    NotAbsorbing,
    EmptyTrajectory,
    LengthMismatch,
    InadmissibleAction,
    ImpossibleStep,
    NotViolating,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::RowSum => "ROW_SUM",
            ViolationCode::ProbRange => "PROB_RANGE",
            ViolationCode::InvalidIndex => "INVALID_INDEX",
            ViolationCode::MissingRow => "MISSING_ROW",
            ViolationCode::NoAdmissibleAction => "NO_ADMISSIBLE_ACTION",
            ViolationCode::NotAbsorbing => "NOT_ABSORBING",
            ViolationCode::EmptyTrajectory => "EMPTY_TRAJECTORY",
            ViolationCode::LengthMismatch => "LENGTH_MISMATCH",
            ViolationCode::InadmissibleAction => "INADMISSIBLE_ACTION",
            ViolationCode::ImpossibleStep => "IMPOSSIBLE_STEP",
            ViolationCode::NotViolating => "NOT_VIOLATING",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn merge(mut self, other: ValidationReport) -> Self {
        self.violations.extend(other.violations);
        self.ok = self.violations.is_empty();
        self
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{} at {}: {}", v.code, v.location, v.message)?;
        }
        Ok(())
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, location: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            location: location.into(),
            message: message.into(),
        });
    }
}

fn check_row(out: &mut Collector, row: &[(usize, f64)], bound: usize, location: &str) {
    let mut sum = 0.0;
    for &(t, p) in row {
        if t >= bound {
            out.push(ViolationCode::InvalidIndex, location, format!("next state {t} out of range"));
        }
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            out.push(ViolationCode::ProbRange, location, format!("probability {p} outside [0, 1]"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        out.push(ViolationCode::RowSum, location, format!("outgoing probabilities sum to {sum}"));
    }
}

/// Checks row sums, probability ranges, row coverage of admissible pairs,
/// admissibility non-emptiness and absorption of the unsafe set.
pub fn validate_mmdp(m: &Mmdp) -> ValidationReport {
    let mut out = Collector(Vec::new());
    let n = m.n_agents();
    let unsafe_mask = m.unsafe_mask();

    match &m.admissibility {
        Admissibility::PerAgent(lists) => {
            for (i, table) in lists.iter().enumerate() {
                for (si, acts) in table.iter().enumerate() {
                    if acts.is_empty() {
                        out.push(
                            ViolationCode::NoAdmissibleAction,
                            format!("agent {} state {}", m.agents[i], m.state_labels[i][si]),
                            "no admissible action",
                        );
                    }
                }
            }
        }
        Admissibility::Joint(map) => {
            for (&s, acts) in map {
                if acts.is_empty() && !unsafe_mask[s] {
                    out.push(
                        ViolationCode::NoAdmissibleAction,
                        format!("state {}", m.format_state(s)),
                        "no admissible joint action in a safe state",
                    );
                }
            }
        }
        Admissibility::All => {}
    }

    match &m.dynamics {
        Dynamics::Joint(table) => {
            for (s, a, row) in table.rows() {
                let loc = format!("row {} / {}", m.format_state(s), m.format_action(a));
                check_row(&mut out, row, m.state_space.len(), &loc);
            }
            for s in 0..m.state_space.len() {
                if unsafe_mask[s] {
                    continue;
                }
                for a in m.admissible_actions(s) {
                    if table.row(s, a).is_none() {
                        out.push(
                            ViolationCode::MissingRow,
                            format!("row {} / {}", m.format_state(s), m.format_action(a)),
                            "admissible pair has no transition entries",
                        );
                    }
                }
            }
        }
        Dynamics::Factored { factors, .. } => {
            for f in factors {
                let i = f.agent;
                let own = f.own_position();
                for c in 0..f.context.len() {
                    let ctx = f.context.decode(c);
                    let local_state = ctx[own];
                    let allowed = m
                        .local_actions(i, local_state)
                        .unwrap_or_else(|| (0..f.n_actions).collect());
                    for a in 0..f.n_actions {
                        let row = f.row_at(c, a);
                        let loc = format!(
                            "factor {} context {:?} action {}",
                            m.agents[i], ctx, m.action_labels[i][a]
                        );
                        if row.is_empty() {
                            if allowed.contains(&a) {
                                out.push(ViolationCode::MissingRow, loc, "admissible action has no factor row");
                            }
                            continue;
                        }
                        check_row(&mut out, row, m.state_labels[i].len(), &loc);
                    }
                }
            }
        }
    }

    let frozen = matches!(m.dynamics, Dynamics::Factored { freeze_unsafe: true, .. });
    if !frozen {
        let mut succ = Vec::new();
        for s in (0..m.state_space.len()).filter(|&s| unsafe_mask[s]) {
            for a in m.admissible_actions(s) {
                m.successors_into(s, a, &mut succ);
                for &(t, p) in &succ {
                    if p > 0.0 && t < unsafe_mask.len() && !unsafe_mask[t] {
                        out.push(
                            ViolationCode::NotAbsorbing,
                            format!("row {} / {}", m.format_state(s), m.format_action(a)),
                            format!("unsafe state leaves the unsafe set to {} with p={p}", m.format_state(t)),
                        );
                    }
                }
            }
        }
    }

    let _ = n;
    ValidationReport::from_violations(out.0)
}

/// Checks path consistency: arity, admissibility, positive-probability steps,
/// and terminal unsafety for violation instances.
pub fn validate_trajectory(m: &Mmdp, tr: &Trajectory) -> ValidationReport {
    let mut out = Collector(Vec::new());
    let t_len = tr.horizon();
    if t_len == 0 {
        out.push(ViolationCode::EmptyTrajectory, "trajectory", "no states");
        return ValidationReport::from_violations(out.0);
    }
    if tr.actions.len() + 1 != t_len {
        out.push(
            ViolationCode::LengthMismatch,
            "trajectory.actions",
            format!("{} states need {} actions, found {}", t_len, t_len - 1, tr.actions.len()),
        );
    }
    let states: Vec<Option<usize>> = tr
        .states
        .iter()
        .enumerate()
        .map(|(t, s)| match m.state_space.encode(s) {
            Ok(idx) => Some(idx),
            Err(e) => {
                out.push(ViolationCode::InvalidIndex, format!("trajectory.states[{t}]"), e.to_string());
                None
            }
        })
        .collect();
    for (t, a) in tr.actions.iter().enumerate() {
        let a_idx = match m.action_space.encode(a) {
            Ok(idx) => idx,
            Err(e) => {
                out.push(ViolationCode::InvalidIndex, format!("trajectory.actions[{t}]"), e.to_string());
                continue;
            }
        };
        let (Some(s), Some(Some(s2))) = (states[t], states.get(t + 1)) else {
            continue;
        };
        if !m.is_admissible(s, a_idx) {
            out.push(
                ViolationCode::InadmissibleAction,
                format!("trajectory.actions[{t}]"),
                format!("{} not admissible in {}", m.format_action(a_idx), m.format_state(s)),
            );
            continue;
        }
        let p = m.transition_prob(s, a_idx, *s2).unwrap_or(0.0);
        if p <= 0.0 {
            out.push(
                ViolationCode::ImpossibleStep,
                format!("trajectory step {t}"),
                format!(
                    "{} --{}--> {} has probability {p}",
                    m.format_state(s),
                    m.format_action(a_idx),
                    m.format_state(*s2)
                ),
            );
        }
    }
    if tr.violation {
        if let Some(Some(last)) = states.last() {
            if !m.is_unsafe_tuple(&m.state_space.decode(*last)) {
                out.push(
                    ViolationCode::NotViolating,
                    format!("trajectory.states[{}]", t_len - 1),
                    "violation instance ends in a safe state",
                );
            }
        }
    }
    ValidationReport::from_violations(out.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// Two agents on locations {0, 1}; action 0 stays, action 1 toggles.
    fn toggle_model(p_toggle: f64) -> Mmdp {
        let counts = [2, 2];
        let factors = (0..2)
            .map(|i| {
                let mut f = Factor::new(i, vec![i], &counts, 2).unwrap();
                for s in 0..2 {
                    f.set_row(&[s], 0, vec![(s, 1.0)]).unwrap();
                    f.set_row(&[s], 1, vec![(1 - s, p_toggle), (s, 1.0 - p_toggle)]).unwrap();
                }
                f
            })
            .collect();
        Mmdp::new(
            vec!["a".into(), "b".into()],
            vec![labels("", 2), labels("", 2)],
            vec![vec!["stay".into(), "toggle".into()]; 2],
            Admissibility::All,
            Dynamics::Factored {
                factors,
                freeze_unsafe: true,
            },
            UnsafeSpec::Collision { pairs: None },
        )
        .unwrap()
    }

    #[test]
    fn well_formed_model_validates() {
        let m = toggle_model(0.5);
        let report = validate_mmdp(&m);
        assert!(report.ok, "{report}");
    }

    #[test]
    fn factored_product_probability() {
        let m = toggle_model(0.5);
        let s = m.state_space().encode(&[0, 1]).unwrap();
        let a = m.action_space().encode(&[1, 1]).unwrap();
        let s2 = m.state_space().encode(&[1, 0]).unwrap();
        assert_eq!(m.transition_prob(s, a, s2).unwrap(), 0.25);
        let total: f64 = (0..4).map(|t| m.transition_prob(s, a, t).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_unsafe_state_self_loops() {
        let m = toggle_model(0.5);
        let s = m.state_space().encode(&[1, 1]).unwrap();
        assert!(m.is_unsafe(s).unwrap());
        let a = m.action_space().encode(&[1, 1]).unwrap();
        assert_eq!(m.successors(s, a), vec![(s, 1.0)]);
    }

    fn joint_line(row_mass: f64, leak: Option<f64>) -> Mmdp {
        // one agent, states {0: safe, 1: unsafe}
        let mut t = JointTransitions::new();
        t.insert(0, 0, 0, 0.7 * row_mass);
        t.insert(0, 0, 1, 0.3 * row_mass);
        match leak {
            Some(p) => {
                t.insert(1, 0, 0, p);
                t.insert(1, 0, 1, 1.0 - p);
            }
            None => t.insert(1, 0, 1, 1.0),
        }
        Mmdp::new(
            vec!["x".into()],
            vec![labels("s", 2)],
            vec![vec!["go".into()]],
            Admissibility::All,
            Dynamics::Joint(t),
            UnsafeSpec::Explicit(vec![vec![Some(1)]]),
        )
        .unwrap()
    }

    #[test]
    fn row_sum_violation_reported() {
        let report = validate_mmdp(&joint_line(0.9, None));
        assert!(!report.ok);
        assert!(report.has(ViolationCode::RowSum));
    }

    #[test]
    fn leaking_unsafe_state_reported() {
        let report = validate_mmdp(&joint_line(1.0, Some(0.3)));
        assert!(report.has(ViolationCode::NotAbsorbing));
        assert!(!report.has(ViolationCode::RowSum));
    }

    #[test]
    fn absent_entry_is_zero() {
        let m = joint_line(1.0, None);
        assert_eq!(m.transition_prob(1, 0, 0).unwrap(), 0.0);
        assert!(m.transition_prob(2, 0, 0).is_err());
    }

    #[test]
    fn inadmissible_action_is_a_domain_error() {
        let mut lists = vec![vec![vec![0], vec![0, 1]]; 2];
        lists[1][0] = vec![0, 1];
        let base = toggle_model(1.0);
        let m = Mmdp::new(
            base.agents().to_vec(),
            vec![labels("", 2), labels("", 2)],
            vec![vec!["stay".into(), "toggle".into()]; 2],
            Admissibility::PerAgent(lists),
            base.dynamics().clone(),
            UnsafeSpec::Collision { pairs: None },
        )
        .unwrap();
        let s = m.state_space().encode(&[0, 1]).unwrap();
        let a = m.action_space().encode(&[1, 0]).unwrap();
        assert!(matches!(m.transition_prob(s, a, s), Err(Error::Domain(_))));
        assert_eq!(m.admissible_actions(s), vec![0, 1]);
    }

    #[test]
    fn collision_predicate() {
        let m = toggle_model(1.0);
        assert!(m.is_unsafe(m.state_space().encode(&[1, 1]).unwrap()).unwrap());
        assert!(!m.is_unsafe(m.state_space().encode(&[0, 1]).unwrap()).unwrap());
        assert!(m.is_unsafe(99).is_err());
    }

    #[test]
    fn explicit_wildcard_pattern() {
        let base = toggle_model(1.0);
        let m = Mmdp::new(
            base.agents().to_vec(),
            vec![labels("", 2), labels("", 2)],
            vec![vec!["stay".into(), "toggle".into()]; 2],
            Admissibility::All,
            base.dynamics().clone(),
            UnsafeSpec::Explicit(vec![vec![Some(1), None]]),
        )
        .unwrap();
        assert!(m.is_unsafe_tuple(&[1, 0]));
        assert!(m.is_unsafe_tuple(&[1, 1]));
        assert!(!m.is_unsafe_tuple(&[0, 1]));
    }

    #[test]
    fn trajectory_checks() {
        let m = toggle_model(1.0);
        let ok = Trajectory::new(vec![vec![0, 1], vec![1, 1]], vec![vec![1, 0]], true);
        assert!(validate_trajectory(&m, &ok).ok);

        let impossible = Trajectory::new(vec![vec![0, 1], vec![0, 0]], vec![vec![0, 0]], false);
        assert!(validate_trajectory(&m, &impossible).has(ViolationCode::ImpossibleStep));

        let safe_end = Trajectory::new(vec![vec![0, 1], vec![1, 0]], vec![vec![1, 1]], true);
        assert!(validate_trajectory(&m, &safe_end).has(ViolationCode::NotViolating));

        let short = Trajectory::new(vec![vec![0, 1], vec![1, 0]], vec![], false);
        assert!(validate_trajectory(&m, &short).has(ViolationCode::LengthMismatch));
    }
}
