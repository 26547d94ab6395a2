//! Scenario files: schema, loading into a model and trajectory, the built-in
//! road scenarios, and report rendering.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::DorReport;
use crate::localq::{FactoredMmdp, InteractionGraph};
use crate::model::{
    validate_mmdp, validate_trajectory, Admissibility, Dynamics, Factor, ForbiddenRule, JointTransitions, Mmdp,
    Trajectory, UnsafeSpec, ValidationReport,
};

pub const SCHEMA_VERSION: &str = "1";

/// Failure to turn a document into a validated scenario.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code} at {location}: {message}")]
pub struct ScenarioError {
    pub code: String,
    pub location: String,
    pub message: String,
}

impl ScenarioError {
    fn new(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError {
            code: code.to_string(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Whether the failure comes from model or trajectory validation rather
    /// than from the document structure.
    pub fn is_validation(&self) -> bool {
        self.code.starts_with("VALIDATION_")
    }
}

type SResult<T> = std::result::Result<T, ScenarioError>;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    pub agents: Vec<AgentDecl>,
    pub locations: Locations,
    pub actions: BTreeMap<String, ActionDecl>,
    pub transitions: TransitionsDecl,
    #[serde(rename = "unsafe")]
    pub unsafe_set: UnsafeDecl,
    pub trajectory: TrajectoryDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDecl>,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Vehicle,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDecl {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub kind: AgentKind,
}

/// One location set shared by all agents, or a state set per agent id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Locations {
    Shared(Vec<String>),
    PerAgent(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDecl {
    pub labels: Vec<String>,
    /// Admissible labels by location; unlisted locations admit every label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissible: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeDecl {
    /// Each factor conditions on its own agent only.
    #[default]
    Independent,
    /// Each factor conditions on the agent and its graph neighbours.
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionsDecl {
    Factored {
        #[serde(default = "yes")]
        freeze_unsafe: bool,
        #[serde(default)]
        scope: ScopeDecl,
        entries: Vec<FactorEntry>,
    },
    Joint {
        entries: Vec<JointEntry>,
    },
}

/// `Pr_agent(to | from, context, action) += p`. Scope members missing from
/// `context` match all of their states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorEntry {
    pub agent: String,
    pub from: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, String>,
    pub action: String,
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub from: Vec<String>,
    pub action: Vec<String>,
    pub to: Vec<String>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum UnsafeDecl {
    /// Patterns of agent id to state label; absent agents match anything.
    Explicit { states: Vec<BTreeMap<String, String>> },
    Collision {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pairs: Option<Vec<(String, String)>>,
    },
    Forbidden { rules: Vec<ForbiddenDecl> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenDecl {
    pub agent: String,
    pub states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDecl {
    /// Number of states; must match `states` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub states: Vec<Vec<String>>,
    pub actions: Vec<Vec<String>>,
    #[serde(default = "yes")]
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDecl {
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// A loaded scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: Mmdp,
    pub trajectory: Trajectory,
    pub graph: Option<InteractionGraph>,
    pub kinds: Vec<AgentKind>,
    pub metadata: Metadata,
}

impl Scenario {
    /// Model paired with its interaction graph.
    pub fn factored(&self) -> crate::Result<FactoredMmdp> {
        let graph = self
            .graph
            .clone()
            .ok_or_else(|| crate::Error::Domain("scenario declares no interaction graph".into()))?;
        FactoredMmdp::new(self.model.clone(), graph)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mmdp(&self.model).merge(validate_trajectory(&self.model, &self.trajectory))
    }
}

fn json_error(e: &serde_json::Error) -> ScenarioError {
    use serde_json::error::Category;
    let code = match e.classify() {
        Category::Syntax | Category::Eof | Category::Io => "SCHEMA_SYNTAX",
        Category::Data => "SCHEMA_INVALID",
    };
    ScenarioError::new(code, format!("line {}, column {}", e.line(), e.column()), e.to_string())
}

/// Decodes the document without checking probabilities or the trajectory.
pub fn read_scenario_file(text: &str) -> SResult<ScenarioFile> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(&e))?;
    match value.get("schema_version") {
        Some(serde_json::Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(other) => {
            return Err(ScenarioError::new(
                "SCHEMA_VERSION",
                "schema_version",
                format!("unsupported schema version {other}, expected \"{SCHEMA_VERSION}\""),
            ))
        }
        None => {
            return Err(ScenarioError::new(
                "SCHEMA_VERSION",
                "schema_version",
                "missing schema_version",
            ))
        }
    }
    serde_json::from_str(text).map_err(|e| json_error(&e))
}

/// Parses, loads and validates a scenario document.
pub fn parse_scenario(text: &str, name: &str) -> SResult<Scenario> {
    let file = read_scenario_file(text)?;
    let sc = load(&file, name)?;
    ensure_valid(&sc)?;
    Ok(sc)
}

/// Converts a failing validation report into an error carrying its first
/// violation.
pub fn ensure_valid(sc: &Scenario) -> SResult<()> {
    let report = sc.validate();
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(ScenarioError::new(
            &format!("VALIDATION_{}", v.code),
            v.location.clone(),
            format!("{} ({} violation(s) in total)", v.message, report.violations.len()),
        )),
    }
}

struct Resolver<'a> {
    agent_index: HashMap<&'a str, usize>,
    ids: Vec<&'a str>,
    states: Vec<Vec<String>>,
    actions: Vec<Vec<String>>,
}

impl Resolver<'_> {
    fn agent(&self, id: &str, loc: &str) -> SResult<usize> {
        self.agent_index
            .get(id)
            .copied()
            .ok_or_else(|| ScenarioError::new("SCHEMA_UNKNOWN_AGENT", loc, format!("unknown agent '{id}'")))
    }

    fn state(&self, agent: usize, label: &str, loc: &str) -> SResult<usize> {
        self.states[agent].iter().position(|l| l == label).ok_or_else(|| {
            ScenarioError::new(
                "SCHEMA_UNKNOWN_STATE",
                loc,
                format!("agent '{}' has no location '{label}'", self.ids[agent]),
            )
        })
    }

    fn action(&self, agent: usize, label: &str, loc: &str) -> SResult<usize> {
        self.actions[agent].iter().position(|l| l == label).ok_or_else(|| {
            ScenarioError::new(
                "SCHEMA_UNKNOWN_ACTION",
                loc,
                format!("agent '{}' has no action '{label}'", self.ids[agent]),
            )
        })
    }

    fn tuple(&self, labels: &[String], loc: &str, action: bool) -> SResult<Vec<usize>> {
        if labels.len() != self.ids.len() {
            return Err(ScenarioError::new(
                "SCHEMA_INVALID",
                loc,
                format!("expected {} components, found {}", self.ids.len(), labels.len()),
            ));
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if action {
                    self.action(i, l, loc)
                } else {
                    self.state(i, l, loc)
                }
            })
            .collect()
    }
}

fn invalid(loc: &str, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::new("SCHEMA_INVALID", loc, e.to_string())
}

/// Builds the model, trajectory and graph described by a document.
pub fn load(file: &ScenarioFile, name: &str) -> SResult<Scenario> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::new(
            "SCHEMA_VERSION",
            "schema_version",
            format!("unsupported schema version \"{}\"", file.schema_version),
        ));
    }
    if file.agents.is_empty() {
        return Err(invalid("agents", "at least one agent is required"));
    }
    let mut agent_index = HashMap::new();
    for (i, a) in file.agents.iter().enumerate() {
        if agent_index.insert(a.id.as_str(), i).is_some() {
            return Err(invalid(&format!("agents[{i}].id"), format!("duplicate agent id '{}'", a.id)));
        }
    }
    let ids: Vec<&str> = file.agents.iter().map(|a| a.id.as_str()).collect();
    let n = ids.len();

    let states: Vec<Vec<String>> = match &file.locations {
        Locations::Shared(l) => vec![l.clone(); n],
        Locations::PerAgent(map) => {
            if let Some(k) = map.keys().find(|k| !agent_index.contains_key(k.as_str())) {
                return Err(ScenarioError::new(
                    "SCHEMA_UNKNOWN_AGENT",
                    format!("locations.{k}"),
                    format!("unknown agent '{k}'"),
                ));
            }
            ids.iter()
                .map(|id| {
                    map.get(*id)
                        .cloned()
                        .ok_or_else(|| invalid(&format!("locations.{id}"), "missing location list"))
                })
                .collect::<SResult<_>>()?
        }
    };
    if let Some(k) = file.actions.keys().find(|k| !agent_index.contains_key(k.as_str())) {
        return Err(ScenarioError::new(
            "SCHEMA_UNKNOWN_AGENT",
            format!("actions.{k}"),
            format!("unknown agent '{k}'"),
        ));
    }
    let actions: Vec<Vec<String>> = ids
        .iter()
        .map(|id| {
            file.actions
                .get(*id)
                .map(|d| d.labels.clone())
                .ok_or_else(|| invalid(&format!("actions.{id}"), "missing action declaration"))
        })
        .collect::<SResult<_>>()?;
    let r = Resolver {
        agent_index,
        ids: ids.clone(),
        states,
        actions,
    };

    // per-agent admissibility tables
    let mut lists = Vec::with_capacity(n);
    let mut restricted = false;
    for (i, id) in ids.iter().enumerate() {
        let decl = &file.actions[*id];
        let all: Vec<usize> = (0..decl.labels.len()).collect();
        let mut table = vec![all; r.states[i].len()];
        if let Some(adm) = &decl.admissible {
            restricted = true;
            for (loc_label, labels) in adm {
                let loc = format!("actions.{id}.admissible.{loc_label}");
                let s = r.state(i, loc_label, &loc)?;
                let mut acts = labels
                    .iter()
                    .map(|l| r.action(i, l, &loc))
                    .collect::<SResult<Vec<_>>>()?;
                acts.sort_unstable();
                acts.dedup();
                table[s] = acts;
            }
        }
        lists.push(table);
    }
    let admissibility = if restricted {
        Admissibility::PerAgent(lists)
    } else {
        Admissibility::All
    };

    let graph = match &file.graph {
        None => None,
        Some(g) => {
            let edges = g
                .edges
                .iter()
                .enumerate()
                .map(|(e, (a, b))| {
                    let loc = format!("graph.edges[{e}]");
                    Ok((r.agent(a, &loc)?, r.agent(b, &loc)?))
                })
                .collect::<SResult<Vec<_>>>()?;
            Some(InteractionGraph::new(n, &edges).map_err(|e| invalid("graph", e))?)
        }
    };

    let counts: Vec<usize> = r.states.iter().map(Vec::len).collect();
    let dynamics = match &file.transitions {
        TransitionsDecl::Factored {
            freeze_unsafe,
            scope,
            entries,
        } => {
            let mut factors = Vec::with_capacity(n);
            for i in 0..n {
                let sc = match scope {
                    ScopeDecl::Independent => vec![i],
                    ScopeDecl::Graph => {
                        let g = graph
                            .as_ref()
                            .ok_or_else(|| invalid("transitions.scope", "graph scope needs a graph"))?;
                        g.k_hop(i, 1).map_err(|e| invalid("graph", e))?.to_vec()
                    }
                };
                factors.push(Factor::new(i, sc, &counts, r.actions[i].len()).map_err(|e| invalid("transitions", e))?);
            }
            let mut rows: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
            for (e, entry) in entries.iter().enumerate() {
                let loc = format!("transitions.entries[{e}]");
                let i = r.agent(&entry.agent, &loc)?;
                let f = &factors[i];
                let mut fixed: Vec<Option<usize>> = vec![None; f.scope().len()];
                fixed[f.own_position()] = Some(r.state(i, &entry.from, &loc)?);
                for (other, label) in &entry.context {
                    let j = r.agent(other, &loc)?;
                    let pos = f.scope().iter().position(|&x| x == j).ok_or_else(|| {
                        invalid(&loc, format!("agent '{other}' is not in the scope of agent '{}'", entry.agent))
                    })?;
                    if j == i {
                        return Err(invalid(&loc, "context must not repeat the owning agent"));
                    }
                    fixed[pos] = Some(r.state(j, label, &loc)?);
                }
                let a = r.action(i, &entry.action, &loc)?;
                let to = r.state(i, &entry.to, &loc)?;
                let space = f.context_space();
                for c in 0..space.len() {
                    let ctx = space.decode(c);
                    if ctx.iter().zip(&fixed).all(|(v, fx)| fx.is_none_or(|x| x == *v)) {
                        rows.entry((i, c, a)).or_default().push((to, entry.p));
                    }
                }
            }
            for ((i, c, a), row) in rows {
                let ctx = factors[i].context_space().decode(c);
                factors[i].set_row(&ctx, a, row).map_err(|e| invalid("transitions", e))?;
            }
            Dynamics::Factored {
                factors,
                freeze_unsafe: *freeze_unsafe,
            }
        }
        TransitionsDecl::Joint { entries } => {
            let ss = crate::space::JointSpace::new(counts.clone()).map_err(|e| invalid("locations", e))?;
            let asp = crate::space::JointSpace::new(r.actions.iter().map(Vec::len).collect())
                .map_err(|e| invalid("actions", e))?;
            let mut t = JointTransitions::new();
            for (e, entry) in entries.iter().enumerate() {
                let loc = format!("transitions.entries[{e}]");
                let s = ss.encode_unchecked(&r.tuple(&entry.from, &format!("{loc}.from"), false)?);
                let a = asp.encode_unchecked(&r.tuple(&entry.action, &format!("{loc}.action"), true)?);
                let s2 = ss.encode_unchecked(&r.tuple(&entry.to, &format!("{loc}.to"), false)?);
                t.insert(s, a, s2, entry.p);
            }
            Dynamics::Joint(t)
        }
    };

    let unsafe_spec = match &file.unsafe_set {
        UnsafeDecl::Explicit { states } => {
            let mut patterns = Vec::with_capacity(states.len());
            for (p, pat) in states.iter().enumerate() {
                let loc = format!("unsafe.params.states[{p}]");
                let mut v = vec![None; n];
                for (id, label) in pat {
                    let i = r.agent(id, &loc)?;
                    v[i] = Some(r.state(i, label, &loc)?);
                }
                patterns.push(v);
            }
            UnsafeSpec::Explicit(patterns)
        }
        UnsafeDecl::Collision { pairs } => UnsafeSpec::Collision {
            pairs: match pairs {
                None => None,
                Some(ps) => Some(
                    ps.iter()
                        .enumerate()
                        .map(|(p, (a, b))| {
                            let loc = format!("unsafe.params.pairs[{p}]");
                            Ok((r.agent(a, &loc)?, r.agent(b, &loc)?))
                        })
                        .collect::<SResult<_>>()?,
                ),
            },
        },
        UnsafeDecl::Forbidden { rules } => UnsafeSpec::Forbidden(
            rules
                .iter()
                .enumerate()
                .map(|(q, rule)| {
                    let loc = format!("unsafe.params.rules[{q}]");
                    let agent = r.agent(&rule.agent, &loc)?;
                    let states = rule
                        .states
                        .iter()
                        .map(|l| r.state(agent, l, &loc))
                        .collect::<SResult<_>>()?;
                    Ok(ForbiddenRule { agent, states })
                })
                .collect::<SResult<_>>()?,
        ),
    };

    let tr = &file.trajectory;
    if let Some(h) = tr.horizon {
        if h != tr.states.len() {
            return Err(invalid(
                "trajectory.horizon",
                format!("horizon {h} differs from {} listed states", tr.states.len()),
            ));
        }
    }
    let states_idx = tr
        .states
        .iter()
        .enumerate()
        .map(|(t, s)| r.tuple(s, &format!("trajectory.states[{t}]"), false))
        .collect::<SResult<Vec<_>>>()?;
    let actions_idx = tr
        .actions
        .iter()
        .enumerate()
        .map(|(t, a)| r.tuple(a, &format!("trajectory.actions[{t}]"), true))
        .collect::<SResult<Vec<_>>>()?;

    let model = Mmdp::new(
        ids.iter().map(|s| s.to_string()).collect(),
        r.states.clone(),
        r.actions.clone(),
        admissibility,
        dynamics,
        unsafe_spec,
    )
    .map_err(|e| invalid("model", e))?;

    Ok(Scenario {
        name: name.to_string(),
        model,
        trajectory: Trajectory::new(states_idx, actions_idx, tr.violation),
        graph,
        kinds: file.agents.iter().map(|a| a.kind).collect(),
        metadata: file.metadata.clone(),
    })
}

pub fn to_json(file: &ScenarioFile) -> String {
    serde_json::to_string_pretty(file).expect("scenario documents always serialize")
}

/// Resolves `builtin:<id>` or reads a file path.
pub fn resolve(spec: &str) -> std::result::Result<Scenario, ResolveError> {
    if let Some(id) = spec.strip_prefix("builtin:") {
        let file = builtin_scenario(id).ok_or_else(|| ResolveError::UnknownBuiltin(id.to_string()))?;
        let sc = load(&file, id).map_err(ResolveError::Scenario)?;
        return Ok(sc);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| ResolveError::Io(spec.to_string(), e.to_string()))?;
    let name = std::path::Path::new(spec)
        .file_stem()
        .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
    let file = read_scenario_file(&text).map_err(ResolveError::Scenario)?;
    load(&file, &name).map_err(ResolveError::Scenario)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown builtin scenario '{0}'")]
    UnknownBuiltin(String),
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Scenario(ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

fn fmt_dor(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn serialize_report(r: &DorReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("reports always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Table => {
            let w0 = r.scenario.len().max("Scenario".len());
            let w1 = r.agents.iter().map(|a| a.id.len()).max().unwrap_or(0).max("Agent".len());
            let mut out = String::new();
            let _ = writeln!(out, "{:<w0$}  {:<w1$}  DoR", "Scenario", "Agent");
            for (i, a) in r.agents.iter().enumerate() {
                let sc = if i == 0 { r.scenario.as_str() } else { "" };
                let _ = writeln!(out, "{sc:<w0$}  {:<w1$}  {}", a.id, fmt_dor(a.psi));
            }
            if r.no_responsibility {
                let _ = writeln!(out, "no_responsibility: true");
            }
            if let Some(b) = &r.bound {
                match b.value {
                    Some(v) => {
                        let _ = writeln!(out, "bound (k = {}): {v:e}", b.k);
                    }
                    None => {
                        let _ = writeln!(out, "bound (k = {}): uncertified", b.k);
                    }
                }
            }
            out
        }
    }
}

pub const BUILTIN_IDS: [&str; 4] = ["nhtsa1", "nhtsa2", "nhtsa3", "example1"];

pub fn builtin_description(id: &str) -> Option<&'static str> {
    Some(match id {
        "nhtsa1" => "12-cell grid, two vehicles and a static pedestrian; vehicle 1 fails to stop",
        "nhtsa2" => "8-cell two-way road; vehicle 1 makes a U-turn into vehicle 3",
        "nhtsa3" => "9-cell merge; vehicle 1 leaves the ramp into vehicle 2",
        "example1" => "two-lane 8-location segment with four vehicles; vehicles 2 and 3 collide",
        _ => return None,
    })
}

pub fn builtin_scenario(id: &str) -> Option<ScenarioFile> {
    match id {
        "nhtsa1" => Some(nhtsa1()),
        "nhtsa2" => Some(nhtsa2()),
        "nhtsa3" => Some(nhtsa3()),
        "example1" => Some(example1()),
        _ => None,
    }
}

const STOP: &str = "stop";
const FORWARD: &str = "forward";
const LEFT: &str = "forward_left";
const RIGHT: &str = "forward_right";

struct AgentSpec {
    id: &'static str,
    label: &'static str,
    kind: AgentKind,
    states: Vec<String>,
    actions: Vec<&'static str>,
    // deterministic move; None marks an inadmissible action
    step: Box<dyn Fn(&str, &str) -> Option<String>>,
}

fn deterministic(
    agents: Vec<AgentSpec>,
    traj_states: &[&[&str]],
    traj_actions: &[&[&str]],
    graph: Option<GraphDecl>,
    metadata: Metadata,
) -> ScenarioFile {
    let mut locations = BTreeMap::new();
    let mut actions = BTreeMap::new();
    let mut entries = Vec::new();
    for a in &agents {
        locations.insert(a.id.to_string(), a.states.clone());
        let mut admissible = BTreeMap::new();
        for s in &a.states {
            let mut ok = Vec::new();
            for &act in &a.actions {
                if let Some(to) = (a.step)(s, act) {
                    ok.push(act.to_string());
                    entries.push(FactorEntry {
                        agent: a.id.into(),
                        from: s.clone(),
                        context: BTreeMap::new(),
                        action: act.into(),
                        to,
                        p: 1.0,
                    });
                }
            }
            if ok.len() != a.actions.len() {
                admissible.insert(s.clone(), ok);
            }
        }
        actions.insert(
            a.id.to_string(),
            ActionDecl {
                labels: a.actions.iter().map(|s| s.to_string()).collect(),
                admissible: (!admissible.is_empty()).then_some(admissible),
            },
        );
    }
    let owned = |rows: &[&[&str]]| rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
    ScenarioFile {
        schema_version: SCHEMA_VERSION.into(),
        agents: agents
            .iter()
            .map(|a| AgentDecl {
                id: a.id.into(),
                label: Some(a.label.into()),
                kind: a.kind,
            })
            .collect(),
        locations: Locations::PerAgent(locations),
        actions,
        transitions: TransitionsDecl::Factored {
            freeze_unsafe: true,
            scope: ScopeDecl::Independent,
            entries,
        },
        unsafe_set: UnsafeDecl::Collision { pairs: None },
        trajectory: TrajectoryDecl {
            horizon: Some(traj_states.len()),
            states: owned(traj_states),
            actions: owned(traj_actions),
            violation: true,
        },
        graph,
        metadata,
    }
}

/// Move on a grid of `rows` x `cols` cells numbered `cols * row + col`, with
/// travel towards increasing rows. Forward on the last row keeps the cell.
fn grid_step(rows: usize, cols: usize) -> impl Fn(&str, &str) -> Option<String> {
    move |cell: &str, action: &str| {
        let c: usize = cell.parse().ok()?;
        let (row, col) = (c / cols, c % cols);
        let last = row + 1 == rows;
        let to = match action {
            STOP => c,
            FORWARD if last => c,
            FORWARD => c + cols,
            LEFT if !last && col > 0 => c + cols - 1,
            RIGHT if !last && col + 1 < cols => c + cols + 1,
            _ => return None,
        };
        Some(to.to_string())
    }
}

fn labels(range: impl Iterator<Item = usize>) -> Vec<String> {
    range.map(|i| i.to_string()).collect()
}

fn meta(title: &str, notes: &[&str]) -> Metadata {
    Metadata {
        title: title.into(),
        source: "built-in".into(),
        notes: notes.iter().map(|s| s.to_string()).collect(),
    }
}

fn nhtsa1() -> ScenarioFile {
    let vehicle = |id, label| AgentSpec {
        id,
        label,
        kind: AgentKind::Vehicle,
        states: labels(0..12),
        actions: vec![STOP, FORWARD, LEFT, RIGHT],
        step: Box::new(grid_step(4, 3)),
    };
    let pedestrian = AgentSpec {
        id: "P1",
        label: "Pedestrian",
        kind: AgentKind::Obstacle,
        states: vec!["9".into()],
        actions: vec![STOP],
        step: Box::new(|s: &str, _: &str| Some(s.to_string())),
    };
    deterministic(
        vec![vehicle("1", "Agent 1"), vehicle("2", "Agent 2"), pedestrian],
        &[&["0", "1", "9"], &["3", "4", "9"], &["6", "7", "9"], &["9", "10", "9"]],
        &[
            &[FORWARD, FORWARD, STOP],
            &[FORWARD, FORWARD, STOP],
            &[FORWARD, FORWARD, STOP],
        ],
        None,
        meta(
            "Pedestrian crossing: vehicle 1 does not stop",
            &[
                "derived geometry: 4 rows x 3 lanes, cell = 3*row + lane, vehicles drive towards higher rows",
                "the pedestrian is a single-state agent with only a stop action",
            ],
        ),
    )
}

fn nhtsa2() -> ScenarioFile {
    // cells 0..3: northbound lane, row r; cells 4..7: southbound lane, row c-4
    let u_turner = |cell: &str, action: &str| -> Option<String> {
        let c: usize = cell.parse().ok()?;
        let to = match (c < 4, action) {
            (_, STOP) => c,
            (true, FORWARD) => (c + 1).min(3),
            (false, FORWARD) => {
                if c > 4 {
                    c - 1
                } else {
                    c
                }
            }
            (false, LEFT) => c - 4,
            _ => return None,
        };
        Some(to.to_string())
    };
    let northbound = |cell: &str, action: &str| -> Option<String> {
        let c: usize = cell.parse().ok()?;
        match action {
            STOP => Some(c.to_string()),
            FORWARD => Some((c + 1).min(3).to_string()),
            _ => None,
        }
    };
    let lane_a = |id, label| AgentSpec {
        id,
        label,
        kind: AgentKind::Vehicle,
        states: labels(0..4),
        actions: vec![STOP, FORWARD],
        step: Box::new(northbound),
    };
    deterministic(
        vec![
            AgentSpec {
                id: "1",
                label: "Agent 1",
                kind: AgentKind::Vehicle,
                states: labels(0..8),
                actions: vec![STOP, FORWARD, LEFT],
                step: Box::new(u_turner),
            },
            lane_a("2", "Agent 2"),
            lane_a("3", "Agent 3"),
        ],
        &[&["7", "1", "0"], &["6", "2", "1"], &["2", "3", "2"]],
        &[&[FORWARD, FORWARD, FORWARD], &[LEFT, FORWARD, FORWARD]],
        None,
        meta(
            "U-turn: vehicle 1 turns across the northbound lane",
            &[
                "derived geometry: cells 0-3 northbound lane by row, cells 4-7 southbound lane with cell 4+row",
                "forward_left in the southbound lane is the U-turn from 4+row to row",
            ],
        ),
    )
}

fn nhtsa3() -> ScenarioFile {
    let lane_cells: Vec<String> = vec!["1".into(), "4".into(), "7".into()];
    deterministic(
        vec![
            AgentSpec {
                id: "1",
                label: "Agent 1",
                kind: AgentKind::Vehicle,
                states: labels(0..9),
                actions: vec![STOP, FORWARD, LEFT, RIGHT],
                step: Box::new(grid_step(3, 3)),
            },
            AgentSpec {
                id: "2",
                label: "Agent 2",
                kind: AgentKind::Vehicle,
                states: lane_cells,
                actions: vec![FORWARD],
                step: Box::new(grid_step(3, 3)),
            },
        ],
        &[&["0", "1"], &["3", "4"], &["7", "7"]],
        &[&[FORWARD, FORWARD], &[RIGHT, FORWARD]],
        None,
        meta(
            "Merge: vehicle 1 leaves the ramp into vehicle 2",
            &[
                "derived geometry: 3 x 3 grid, lane 0 is the ramp, lane 1 carries vehicle 2, travel towards higher rows",
                "vehicle 2 can only drive forward",
            ],
        ),
    )
}

fn example1() -> ScenarioFile {
    // l1..l4 lane 0, l5..l8 lane 1, travel towards higher indices
    let step = |cell: &str, action: &str| -> Option<String> {
        let c: usize = cell.strip_prefix('l')?.parse::<usize>().ok()? - 1;
        let (lane, pos) = (c / 4, c % 4);
        let end = pos == 3;
        let to = match action {
            STOP => c,
            FORWARD if end => c,
            FORWARD => c + 1,
            RIGHT if lane == 0 && !end => 4 + pos + 1,
            LEFT if lane == 1 && !end => pos + 1,
            _ => return None,
        };
        Some(format!("l{}", to + 1))
    };
    let cells: Vec<String> = (1..=8).map(|i| format!("l{i}")).collect();
    let vehicle = |id, label| AgentSpec {
        id,
        label,
        kind: AgentKind::Vehicle,
        states: cells.clone(),
        actions: vec![STOP, FORWARD, LEFT, RIGHT],
        step: Box::new(step),
    };
    deterministic(
        vec![
            vehicle("1", "Vehicle 1"),
            vehicle("2", "Vehicle 2"),
            vehicle("3", "Vehicle 3"),
            vehicle("4", "Vehicle 4"),
        ],
        &[
            &["l3", "l1", "l5", "l8"],
            &["l4", "l2", "l6", "l8"],
            &["l4", "l7", "l7", "l8"],
        ],
        &[&[FORWARD, FORWARD, FORWARD, STOP], &[STOP, RIGHT, FORWARD, STOP]],
        Some(GraphDecl {
            edges: vec![("1".into(), "2".into()), ("2".into(), "3".into()), ("3".into(), "4".into())],
        }),
        meta(
            "Two-lane road segment with four vehicles",
            &["derived geometry: lane 0 is l1-l4, lane 1 is l5-l8; lane changes move one position ahead"],
        ),
    )
}
