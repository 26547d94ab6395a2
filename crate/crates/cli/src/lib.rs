//! Command-line driver for the responsibility analysis library.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dor_core::identification::{identify_with_q, DEFAULT_EPSILON};
use dor_core::localq::{certify_decay, local_dor, LocalDorOptions, WeightScheme};
use dor_core::pipeline::{compute_dor, DorOptions};
use dor_core::reachability::{compute_q_with_budget, DEFAULT_CELL_BUDGET};
use dor_core::scenario::{
    builtin_description, resolve, serialize_report, ReportFormat, ResolveError, Scenario, BUILTIN_IDS,
};
use dor_core::Error;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dor", version, about = "Degree of responsibility for multi-agent safety violations")]
struct Cli {
    /// Largest Q-table size, in state-action-stage cells.
    #[arg(long, global = true, env = "DOR_CELL_BUDGET", default_value_t = DEFAULT_CELL_BUDGET as u64)]
    cell_budget: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario's model and trajectory.
    Validate { scenario: String },
    /// Compute Shapley values and degrees of responsibility.
    Dor {
        scenario: String,
        /// Screen candidate agents first and restrict Shapley to them.
        #[arg(long)]
        restrict: bool,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[command(flatten)]
        output: OutputArgs,
        /// Print table size and runtime to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// List agents whose own action change lowers the risk.
    Identify {
        scenario: String,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Approximate responsibility from k-hop local Q-functions.
    LocalDor {
        scenario: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Weights::Uniform)]
        weights: Weights,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit an exponential decay envelope to the stage-0 deviations.
    DecayCheck {
        scenario: String,
        #[arg(long)]
        k_max: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Table => ReportFormat::Table,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weights {
    Uniform,
}

/// A failed command: exit code plus a diagnostic line.
struct Failure(i32, String);

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn from_core(e: Error) -> Failure {
    let code = match &e {
        Error::ResourceGuard { .. } => EXIT_RESOURCE,
        Error::Domain(_) => EXIT_USAGE,
        Error::Invariant(_) | Error::Scenario(_) => EXIT_VALIDATION,
    };
    Failure(code, e.to_string())
}

fn load(spec: &str) -> Result<Scenario, Failure> {
    resolve(spec).map_err(|e| match e {
        ResolveError::UnknownBuiltin(_) | ResolveError::Io(..) => usage(e.to_string()),
        ResolveError::Scenario(s) => Failure(EXIT_VALIDATION, s.to_string()),
    })
}

fn load_valid(spec: &str) -> Result<Scenario, Failure> {
    let sc = load(spec)?;
    let report = sc.validate();
    if !report.ok {
        return Err(Failure(EXIT_VALIDATION, format!("invalid scenario {spec}:\n{}", report.to_string().trim_end())));
    }
    Ok(sc)
}

fn emit(output: &OutputArgs, text: &str, out: &mut dyn Write) -> Outcome {
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| usage(format!("cannot write output: {e}"))),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

fn check_epsilon(e: f64) -> Outcome {
    if e > 0.0 && e.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--epsilon must be a positive number, got {e}")))
    }
}

fn validate(spec: &str, out: &mut dyn Write) -> Outcome {
    let sc = load(spec)?;
    let report = sc.validate();
    let _ = write!(out, "{report}");
    if report.ok {
        Ok(())
    } else {
        Err(Failure(EXIT_VALIDATION, format!("{spec}: {} violation(s)", report.violations.len())))
    }
}

fn dor(
    spec: &str,
    opts: DorOptions,
    output: &OutputArgs,
    stats: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    check_epsilon(opts.epsilon)?;
    let sc = load_valid(spec)?;
    let (report, st) = compute_dor(&sc.model, &sc.trajectory, &sc.name, &opts).map_err(from_core)?;
    emit(output, &serialize_report(&report, output.format.into()), out)?;
    if stats {
        let _ = writeln!(
            err,
            "q_cells: {}\nq_bytes: {}\ncoalitions: {}\nruntime_ms: {:.3}",
            st.q_cells,
            st.q_bytes,
            st.coalitions_evaluated,
            st.elapsed.as_secs_f64() * 1e3
        );
    }
    Ok(())
}

fn identify(spec: &str, epsilon: f64, budget: u128, output: &OutputArgs, out: &mut dyn Write) -> Outcome {
    check_epsilon(epsilon)?;
    let sc = load_valid(spec)?;
    let m = &sc.model;
    let q = compute_q_with_budget(m, sc.trajectory.horizon(), budget).map_err(from_core)?;
    let id = identify_with_q(&q, &sc.trajectory, epsilon).map_err(from_core)?;
    let names: Vec<&str> = id.responsible.iter().map(|i| m.agents()[i].as_str()).collect();
    let text = match output.format {
        Format::Json => {
            let rows: Vec<_> = id
                .improvements
                .iter()
                .map(|mi| {
                    json!({
                        "agent": m.agents()[mi.agent],
                        "stage": mi.stage,
                        "alternative": mi.alternative.map(|a| m.action_labels(mi.agent)[a].clone()),
                        "improvement": mi.improvement,
                    })
                })
                .collect();
            pretty(&json!({
                "scenario": sc.name,
                "epsilon": epsilon,
                "responsible_set": names,
                "improvements": rows,
            }))
        }
        Format::Table => {
            let mut s = format!("responsible: {{{}}}\n", names.join(", "));
            s.push_str("Agent  Stage  Alternative  Improvement\n");
            for mi in &id.improvements {
                let alt = mi.alternative.map_or("-", |a| m.action_labels(mi.agent)[a].as_str());
                s.push_str(&format!("{:<5}  {:<5}  {alt:<11}  {}\n", m.agents()[mi.agent], mi.stage, mi.improvement));
            }
            s
        }
    };
    emit(output, &text, out)
}

fn radius_limit(sc: &Scenario) -> usize {
    let g = sc.graph.as_ref().expect("checked by caller");
    g.diameter().unwrap_or(g.len().saturating_sub(1))
}

fn local(spec: &str, k: usize, weights: Weights, output: &OutputArgs, out: &mut dyn Write) -> Outcome {
    let sc = load_valid(spec)?;
    if sc.graph.is_none() {
        return Err(usage(format!("{spec} declares no interaction graph; local-dor needs one")));
    }
    let f = sc.factored().map_err(from_core)?;
    let certificate = certify_decay(&f, radius_limit(&sc).max(k)).map_err(from_core)?;
    let opts = LocalDorOptions {
        weights: match weights {
            Weights::Uniform => WeightScheme::Uniform,
        },
        certificate: Some(certificate),
    };
    let mut report = local_dor(&f, &sc.trajectory, k, &opts).map_err(from_core)?;
    report.scenario = sc.name.clone();
    emit(output, &serialize_report(&report, output.format.into()), out)
}

fn decay(spec: &str, k_max: usize, output: &OutputArgs, out: &mut dyn Write) -> Outcome {
    let sc = load_valid(spec)?;
    if sc.graph.is_none() {
        return Err(usage(format!("{spec} declares no interaction graph; decay-check needs one")));
    }
    let f = sc.factored().map_err(from_core)?;
    let cert = certify_decay(&f, k_max).map_err(from_core)?;
    let text = match output.format {
        Format::Json => {
            let mut v = serde_json::to_value(&cert).expect("certificates always serialize");
            v["scenario"] = json!(sc.name);
            pretty(&v)
        }
        Format::Table => {
            let mut s = format!("c: {}\ngamma: {}\ncertified: {}\n", cert.c, cert.gamma, cert.certified);
            s.push_str("k  deviation  envelope\n");
            for (k, d) in cert.deviations.iter().enumerate() {
                s.push_str(&format!("{k:<2} {d:<10} {:e}\n", cert.envelope(k)));
            }
            s
        }
    };
    emit(output, &text, out)
}

fn scenarios(out: &mut dyn Write) -> Outcome {
    for id in BUILTIN_IDS {
        let _ = writeln!(out, "builtin:{id:<10} {}", builtin_description(id).unwrap_or(""));
    }
    Ok(())
}

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let budget = u128::from(cli.cell_budget);
    let result = match &cli.command {
        Command::Validate { scenario } => validate(scenario, out),
        Command::Dor {
            scenario,
            restrict,
            epsilon,
            output,
            stats,
        } => {
            let opts = DorOptions {
                restrict: *restrict,
                epsilon: *epsilon,
                cell_budget: budget,
            };
            dor(scenario, opts, output, *stats, out, err)
        }
        Command::Identify { scenario, epsilon, output } => identify(scenario, *epsilon, budget, output, out),
        Command::LocalDor {
            scenario,
            k,
            weights,
            output,
        } => local(scenario, *k, *weights, output, out),
        Command::DecayCheck { scenario, k_max, output } => decay(scenario, *k_max, output, out),
        Command::Scenarios => scenarios(out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
