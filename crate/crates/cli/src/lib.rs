//! Command-line front end for scenario validation, simulation, audit and
//! plot-data extraction.

use clap::{Args, Parser, Subcommand};
use rigid_formation::envelopes::ErrorFamily;
use rigid_formation::scenario::{load_scenario, ConstraintMode, Scenario, ScenarioError, ValidationReport};
use rigid_formation::sim::{self, audit, read_trace, write_trace, BreachPolicy, SimError, SimTrace};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FAULT: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rigid-formation", version, about = "Prescribed-performance formation control of rigid bodies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario's initial configuration without running it.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        constraint_mode: Option<ConstraintMode>,
    },
    /// Simulate a scenario and write trace.csv and trace.json.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Re-check a stored trace against every invariant.
    Audit { trace: PathBuf },
    /// Print one quantity of a trace as whitespace-separated columns.
    PlotData {
        trace: PathBuf,
        /// One of e_p:K, e_q:K, dist:K, u:I, e_v:I (1-based).
        selector: String,
    },
    /// Print the built-in four-agent benchmark scenario as TOML.
    PaperScenario {
        #[arg(long)]
        constraint_mode: Option<ConstraintMode>,
    },
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunOverrides {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub substeps: Option<u32>,
    #[arg(long)]
    pub constraint_mode: Option<ConstraintMode>,
    #[arg(long)]
    pub breach_policy: Option<BreachPolicy>,
}

/// Runs one command, writing normal output to `out` and diagnostics to `err`.
pub fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Validate { scenario, constraint_mode } => cmd_validate(&scenario, constraint_mode, out),
        Command::Run { scenario, overrides } => cmd_run(&scenario, &overrides, out),
        Command::Audit { trace } => cmd_audit(&trace, out),
        Command::PlotData { trace, selector } => cmd_plotdata(&trace, &selector, out),
        Command::PaperScenario { constraint_mode } => cmd_paper_scenario(constraint_mode, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn io(message: impl ToString) -> Self {
        Failure { code: EXIT_IO, message: message.to_string() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_parse_error() { EXIT_IO } else { EXIT_VALIDATION };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e)
    }
}

type CmdResult = Result<i32, Failure>;

fn load(path: &Path, mode: Option<ConstraintMode>) -> Result<Scenario, Failure> {
    let mut s = load_scenario(path)?;
    if let Some(m) = mode {
        s.set_constraint_mode(m)?;
    }
    Ok(s)
}

pub fn write_report(report: &ValidationReport, out: &mut dyn Write) -> std::io::Result<()> {
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    writeln!(
        out,
        "[{}] communication graph is a tree{}",
        mark(report.is_tree),
        if report.is_tree { "" } else { " (required for a well-posed edge-error map)" }
    )?;
    match &report.sensing {
        Ok(()) => writeln!(out, "[pass] sensing ranges exceed every pairwise radius sum")?,
        Err(e) => writeln!(out, "[FAIL] {e}")?,
    }
    for c in &report.initial.edges {
        writeln!(
            out,
            "[{}] edge {} distance {:.6} in ({:.6}, {:.6})",
            mark(c.passed),
            c.edge,
            c.distance,
            c.d_col,
            c.d_con
        )?;
    }
    for c in &report.feasibility.checks {
        let subject = match c.family {
            ErrorFamily::Velocity => format!("agent {}", c.index + 1),
            _ => match report.initial.edges.get(c.index) {
                Some(e) => format!("edge {}", e.edge),
                None => format!("edge #{}", c.index + 1),
            },
        };
        writeln!(
            out,
            "[{}] {} error, {subject} component {}: {:.6} in ({:.6}, {:.6})",
            mark(c.passed),
            c.family,
            c.component + 1,
            c.value,
            c.lower,
            c.upper
        )?;
    }
    writeln!(out, "{}", if report.passed() { "validation passed" } else { "validation FAILED" })
}

pub fn cmd_validate(path: &Path, mode: Option<ConstraintMode>, out: &mut dyn Write) -> CmdResult {
    let scenario = load(path, mode)?;
    let report = scenario.validate()?;
    write_report(&report, out)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

fn apply_overrides(s: &mut Scenario, o: &RunOverrides) -> Result<(), Failure> {
    if let Some(m) = o.constraint_mode {
        s.set_constraint_mode(m)?;
    }
    if let Some(seed) = o.seed {
        s.sim.seed = seed;
    }
    if let Some(dt) = o.dt {
        s.sim.dt = dt;
    }
    if let Some(d) = o.duration {
        s.sim.duration = d;
    }
    if let Some(n) = o.substeps {
        s.sim.substeps = n;
    }
    if let Some(p) = o.breach_policy {
        s.sim.breach_policy = p;
    }
    s.sim
        .validate()
        .map_err(|e| Failure { code: EXIT_VALIDATION, message: e.to_string() })
}

pub fn cmd_run(path: &Path, overrides: &RunOverrides, out: &mut dyn Write) -> CmdResult {
    let mut scenario = load(path, None)?;
    apply_overrides(&mut scenario, overrides)?;
    let report = scenario.validate()?;
    if !report.passed() {
        write_report(&report, out)?;
        return Ok(EXIT_VALIDATION);
    }
    let setup = scenario.build()?;
    let (mut trace, fault) = match sim::run(&scenario.sim, &setup) {
        Ok(trace) => (trace, None),
        Err(SimError::Fault { report, trace }) => (*trace, Some(report)),
        Err(e @ SimError::Infeasible(_)) | Err(e @ SimError::Config(_)) => {
            return Err(Failure { code: EXIT_VALIDATION, message: e.to_string() })
        }
    };
    trace.header.scenario = Some(scenario.to_toml_string());
    write_trace(&trace, &overrides.out).map_err(Failure::io)?;
    summarize(&trace, out)?;
    match fault {
        None => Ok(EXIT_OK),
        Some(report) => {
            writeln!(out, "fault: {report}")?;
            Ok(EXIT_FAULT)
        }
    }
}

fn summarize(trace: &SimTrace, out: &mut dyn Write) -> Result<(), Failure> {
    let violations = audit(trace).map_err(Failure::io)?;
    let Some(last) = trace.last() else { return Ok(()) };
    writeln!(out, "steps: {}, final t = {} s, retried steps: {}", trace.records.len(), last.t, trace.retries)?;
    for (k, e) in last.edges.iter().enumerate() {
        writeln!(
            out,
            "edge {}: e_p = {:.3e} (bounds {:.3e}, {:.3e}), |e_q|max = {:.3e} (bound {:.3e}), distance {:.6}",
            k + 1,
            e.e_p,
            e.p_lower,
            e.p_upper,
            e.e_q.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            e.q_bound,
            e.distance
        )?;
    }
    let max_u = trace
        .records
        .iter()
        .flat_map(|r| r.agents.iter().flat_map(|a| a.u))
        .fold(0.0f64, |m, x| m.max(x.abs()));
    writeln!(out, "max |u|: {max_u:.6e}")?;
    writeln!(out, "violations: {}", violations.len())?;
    Ok(())
}

pub fn cmd_audit(dir: &Path, out: &mut dyn Write) -> CmdResult {
    let trace = read_trace(dir).map_err(Failure::io)?;
    let violations = audit(&trace).map_err(Failure::io)?;
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    writeln!(out, "{} violation(s) in {} records", violations.len(), trace.records.len())?;
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_FAULT })
}

/// A quantity to extract from a trace. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    DistanceError(usize),
    OrientationError(usize),
    Distance(usize),
    Input(usize),
    VelocityError(usize),
}

impl std::str::FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, idx) = s
            .split_once(':')
            .ok_or_else(|| format!("selector {s:?} must look like name:index"))?;
        let idx: usize = idx.parse().map_err(|_| format!("bad index in selector {s:?}"))?;
        if idx == 0 {
            return Err(format!("indices are 1-based in selector {s:?}"));
        }
        let i = idx - 1;
        match name {
            "e_p" => Ok(Selector::DistanceError(i)),
            "e_q" => Ok(Selector::OrientationError(i)),
            "dist" => Ok(Selector::Distance(i)),
            "u" => Ok(Selector::Input(i)),
            "e_v" => Ok(Selector::VelocityError(i)),
            other => Err(format!("unknown selector {other:?} (expected e_p, e_q, dist, u or e_v)")),
        }
    }
}

/// Column names and rows for `sel`.
pub fn plot_columns(trace: &SimTrace, sel: Selector) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let h = &trace.header;
    let (n, m) = (h.n_agents, h.n_edges());
    let check = |i: usize, len: usize, what: &str| {
        if i < len {
            Ok(())
        } else {
            Err(format!("{what} {} out of range (trace has {len})", i + 1))
        }
    };
    let rows = |f: &dyn Fn(&sim::StepRecord) -> Vec<f64>| -> Vec<Vec<f64>> {
        trace
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.t];
                row.extend(f(r));
                row
            })
            .collect()
    };
    let names = |cols: &[String]| -> Vec<String> { std::iter::once("t".to_string()).chain(cols.iter().cloned()).collect() };
    Ok(match sel {
        Selector::DistanceError(k) => {
            check(k, m, "edge")?;
            let cols = [format!("e_p{}", k + 1), "lower".into(), "upper".into()];
            (names(&cols), rows(&|r| vec![r.edges[k].e_p, r.edges[k].p_lower, r.edges[k].p_upper]))
        }
        Selector::OrientationError(k) => {
            check(k, m, "edge")?;
            let cols = [
                format!("e_q{}_1", k + 1),
                format!("e_q{}_2", k + 1),
                format!("e_q{}_3", k + 1),
                "lower".into(),
                "upper".into(),
            ];
            (
                names(&cols),
                rows(&|r| {
                    let e = &r.edges[k];
                    vec![e.e_q[0], e.e_q[1], e.e_q[2], -e.q_bound, e.q_bound]
                }),
            )
        }
        Selector::Distance(k) => {
            check(k, m, "edge")?;
            let e = &h.edges[k];
            let (d_col, d_con) = (e.d_col, e.d_con);
            let cols = [format!("dist{}", k + 1), "d_col".into(), "d_con".into()];
            (names(&cols), rows(&|r| vec![r.edges[k].distance, d_col, d_con]))
        }
        Selector::Input(i) => {
            check(i, n, "agent")?;
            let cols: Vec<String> = (1..=6).map(|c| format!("u{}_{c}", i + 1)).collect();
            (names(&cols), rows(&|r| r.agents[i].u.to_vec()))
        }
        Selector::VelocityError(i) => {
            check(i, n, "agent")?;
            let cols: Vec<String> = (1..=6)
                .map(|c| format!("e_v{}_{c}", i + 1))
                .chain((1..=6).map(|c| format!("rho_v{}_{c}", i + 1)))
                .collect();
            (
                names(&cols),
                rows(&|r| r.agents[i].e_v.iter().chain(&r.agents[i].rho_v).copied().collect()),
            )
        }
    })
}

pub fn cmd_plotdata(dir: &Path, selector: &str, out: &mut dyn Write) -> CmdResult {
    let sel: Selector = selector
        .parse()
        .map_err(|message| Failure { code: EXIT_VALIDATION, message })?;
    let trace = read_trace(dir).map_err(Failure::io)?;
    let (cols, rows) = plot_columns(&trace, sel).map_err(|message| Failure { code: EXIT_VALIDATION, message })?;
    writeln!(out, "# {}", cols.join(" "))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_paper_scenario(mode: Option<ConstraintMode>, out: &mut dyn Write) -> CmdResult {
    let mut s = Scenario::benchmark();
    if let Some(m) = mode {
        s.set_constraint_mode(m)?;
    }
    out.write_all(s.to_toml_string().as_bytes())?;
    Ok(EXIT_OK)
}
