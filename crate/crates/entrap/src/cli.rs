//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 solver did not converge,
//! 4 state-space guard, 5 instance/policy mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use entrap_core::attacker::{AttackerError, AttackerModel, DEFAULT_KAPPA};
use entrap_core::budget::{compute_budget, DEFAULT_BUDGET_CAP};
use entrap_core::defender::{
    check_identities, compile_defender_mdp, defender_initial_value, solve_defender, BoundReport, CompileOptions,
    DefenderError,
};
use entrap_core::domains::{
    generate_four_rooms, generate_gridworld, generate_puddle, generate_rock_sampling, showroom_demo, DomainError,
    DomainInstance, DomainKind, FourRoomsParams, GridworldParams, PuddleParams, RockParams, DEFAULT_GAMMA,
};
use entrap_core::sim::{estimate_return, simulate, ReturnEstimate, SimError};
use entrap_core::{SolveError, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark, write_report, BudgetRecord, MANIFEST_FILE, METRICS_FILE};
use crate::config::{ConfigError, ExperimentConfig};
use crate::formats::{read_instance, read_policy, write_instance, write_json_file, write_policy, AttackerDoc, FormatError, TraceLine, TraceWriter};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_GUARD: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;

/// A failed command: diagnostic plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        let code = match e {
            SolveError::NonConvergence { .. } => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AttackerError> for CliError {
    fn from(e: AttackerError) -> Self {
        match e {
            AttackerError::Solve(s) => s.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<DefenderError> for CliError {
    fn from(e: DefenderError) -> Self {
        let code = match e {
            DefenderError::StateSpaceTooLarge { .. } => EXIT_GUARD,
            DefenderError::Solve(SolveError::NonConvergence { .. }) | DefenderError::InductionMismatch { .. } => {
                EXIT_SOLVER
            }
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        let code = match e {
            DomainError::StateSpaceTooLarge { .. } => EXIT_GUARD,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ModelMismatch | SimError::AttackerMismatch => Self {
                code: EXIT_MISMATCH,
                message: e.to_string(),
            },
            SimError::Attacker(a) => a.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "entrap", version, about = "Plan covert outcome interventions that steer an attacker into traps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark instance (believed model, truth model, traps).
    Generate(GenerateArgs),
    /// Compute the belief-safe intervention budget of an instance.
    Budget(BudgetArgs),
    /// Solve the attacker and the defender and write the defender policy.
    Plan(PlanArgs),
    /// Estimate the attacker's return with and without a defender policy.
    Simulate(SimulateArgs),
    /// Run a benchmark sweep from a config file.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// gridworld, four-rooms, rock-sampling, puddle or showroom.
    pub domain: String,
    /// Grid side length (gridworld, four-rooms, rock-sampling).
    #[arg(long)]
    pub n: Option<usize>,
    /// Probability mass moved to the two perpendicular directions.
    #[arg(long)]
    pub slip: Option<f64>,
    /// Number of trap cells.
    #[arg(long)]
    pub traps: Option<usize>,
    /// Layout seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trap placement seed.
    #[arg(long, default_value_t = 0)]
    pub trap_seed: u64,
    /// Puddle grid step on the unit square.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of rocks (rock-sampling).
    #[arg(long)]
    pub rocks: Option<usize>,
    /// Discount factor.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Output directory.
    #[arg(long, default_value = "instance")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Instance directory written by `generate`.
    #[arg(long)]
    pub instance: PathBuf,
    /// Largest trajectory length searched.
    #[arg(long, default_value_t = DEFAULT_BUDGET_CAP)]
    pub cap: usize,
    /// Write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Attacker rationality; `inf` for a greedy attacker.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Intervention budget; computed from the instance when absent.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Cap for the computed budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET_CAP)]
    pub cap: usize,
    /// `instance` (default), `none`, or comma-separated state indices.
    #[arg(long, default_value = "instance")]
    pub traps: String,
    /// Value-iteration stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iterations: usize,
    /// Largest compiled defender model.
    #[arg(long, default_value_t = 5_000_000)]
    pub state_limit: usize,
    /// Policy file.
    #[arg(long, default_value = "policy.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Defender policy written by `plan`; without it only the baseline runs.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Attacker rationality; defaults to the policy's, else 5.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub episodes: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Episode truncation; derived from the discount when absent.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Write the estimates as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write defended episodes as JSON lines.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment config (TOML); the built-in desk-scale sweep when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the metrics CSV and manifest.
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

/// Runs a parsed command and returns what it printed.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Budget(a) => cmd_budget(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn check_finite(name: &str, x: Option<f64>) -> Result<(), CliError> {
    match x {
        Some(v) if !v.is_finite() => Err(CliError::usage(format!("--{name} must be finite"))),
        _ => Ok(()),
    }
}

pub fn generate_instance(a: &GenerateArgs) -> Result<DomainInstance, CliError> {
    check_finite("slip", a.slip)?;
    check_finite("delta", a.delta)?;
    let kind = DomainKind::from_name(&a.domain).ok_or_else(|| CliError::usage(format!("unknown domain `{}`", a.domain)))?;
    let only = |flag: &str, set: bool, allowed: bool| {
        if set && !allowed {
            Err(CliError::usage(format!("--{flag} does not apply to {}", kind.name())))
        } else {
            Ok(())
        }
    };
    only("n", a.n.is_some(), matches!(kind, DomainKind::Gridworld | DomainKind::FourRooms | DomainKind::RockSampling))?;
    only("delta", a.delta.is_some(), kind == DomainKind::Puddle)?;
    only("rocks", a.rocks.is_some(), kind == DomainKind::RockSampling)?;
    let inst = match kind {
        DomainKind::Gridworld => {
            let d = GridworldParams::default();
            generate_gridworld(&GridworldParams {
                size: a.n.unwrap_or(d.size),
                slip: a.slip.unwrap_or(d.slip),
                n_traps: a.traps.unwrap_or(d.n_traps),
                seed: a.seed,
                trap_seed: a.trap_seed,
                gamma: a.gamma,
                ..d
            })?
        }
        DomainKind::FourRooms => {
            let d = FourRoomsParams::default();
            generate_four_rooms(&FourRoomsParams {
                size: a.n.unwrap_or(d.size),
                slip: a.slip.unwrap_or(d.slip),
                n_traps: a.traps.unwrap_or(d.n_traps),
                seed: a.seed,
                trap_seed: a.trap_seed,
                gamma: a.gamma,
                ..d
            })?
        }
        DomainKind::RockSampling => {
            let d = RockParams::default();
            generate_rock_sampling(&RockParams {
                size: a.n.unwrap_or(d.size),
                slip: a.slip.unwrap_or(d.slip),
                n_rocks: a.rocks.unwrap_or(d.n_rocks),
                n_traps: a.traps.unwrap_or(d.n_traps),
                seed: a.seed,
                trap_seed: a.trap_seed,
                gamma: a.gamma,
                ..d
            })?
        }
        DomainKind::Puddle => {
            let d = PuddleParams::default();
            generate_puddle(&PuddleParams {
                delta: a.delta.unwrap_or(d.delta),
                slip: a.slip.unwrap_or(d.slip),
                n_traps: a.traps.unwrap_or(d.n_traps),
                seed: a.seed,
                trap_seed: a.trap_seed,
                gamma: a.gamma,
                ..d
            })?
        }
        DomainKind::Showroom => {
            if a.slip.is_some() || a.traps.is_some() {
                return Err(CliError::usage("showroom is a fixed map and takes no generator flags"));
            }
            showroom_demo()
        }
        DomainKind::External => return Err(CliError::usage("`external` instances are loaded, not generated")),
    };
    Ok(inst)
}

fn cmd_generate(a: &GenerateArgs) -> Result<String, CliError> {
    let inst = generate_instance(a)?;
    write_instance(&a.out, &inst)?;
    let m = &inst.believed;
    let mut out = String::new();
    writeln!(out, "instance  {}", inst.metadata.label()).unwrap();
    writeln!(out, "states    {}", m.n_states()).unwrap();
    writeln!(out, "actions   {}", m.n_actions()).unwrap();
    writeln!(out, "traps     {}", inst.traps.len()).unwrap();
    writeln!(out, "goal reachable: {}", if inst.metadata.goal_reachable { "yes" } else { "no" }).unwrap();
    writeln!(out, "fingerprint {}", inst.fingerprint().to_hex()).unwrap();
    writeln!(out, "written to {}", a.out.display()).unwrap();
    Ok(out)
}

fn cmd_budget(a: &BudgetArgs) -> Result<String, CliError> {
    if a.cap == 0 {
        return Err(CliError::usage("--cap must be at least 1"));
    }
    let inst = read_instance(&a.instance)?;
    let result = compute_budget(&inst.believed, a.cap);
    let record = BudgetRecord::new(&result, a.cap, &inst.believed);
    let mut out = String::new();
    if result.capped {
        writeln!(out, "capped at {}", result.k).unwrap();
    } else {
        writeln!(out, "K = {}", result.k).unwrap();
    }
    writeln!(out, "usable budget {}", record.usable).unwrap();
    if let Some(w) = &record.witness {
        writeln!(out, "witness {}", w.join(" ")).unwrap();
    }
    if let Some(path) = &a.out {
        write_json_file(path, &record)?;
    }
    Ok(out)
}

fn parse_traps(spec: &str, inst: &DomainInstance) -> Result<Vec<usize>, CliError> {
    match spec {
        "instance" => Ok(inst.traps.clone()),
        "none" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::usage(format!("--traps: `{t}` is not a state index")))
            })
            .collect(),
    }
}

fn cmd_plan(a: &PlanArgs) -> Result<String, CliError> {
    if a.kappa.is_nan() || a.kappa < 0.0 {
        return Err(CliError::usage("--kappa must be non-negative"));
    }
    let inst = read_instance(&a.instance)?;
    let traps = parse_traps(&a.traps, &inst)?;
    let cfg = SolverConfig {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
    };
    let t0 = Instant::now();
    let attacker = AttackerModel::build(inst.believed.clone(), a.kappa, cfg)?;
    let (budget, budget_note) = match a.budget {
        Some(0) => return Err(CliError::usage("--budget must be at least 1")),
        Some(k) => (k, "given".to_string()),
        None => {
            let r = compute_budget(&inst.believed, a.cap);
            let usable = r.usable_budget(a.cap);
            if usable == 0 {
                (1, format!("computed K = {}, raised to 1", r.k))
            } else if r.capped {
                (usable, format!("capped at {}", r.k))
            } else {
                (usable, format!("computed K = {}", r.k))
            }
        }
    };
    let options = CompileOptions {
        prune_unreachable: true,
        state_limit: Some(a.state_limit),
    };
    let dmdp = compile_defender_mdp(&attacker, &traps, budget, options)?;
    let t1 = Instant::now();
    let solution = solve_defender(&dmdp, cfg)?;
    let t2 = Instant::now();
    let value = defender_initial_value(&solution, &attacker);
    let baseline = attacker.baseline_value(cfg)?;
    let ids = check_identities(&solution, &attacker);
    let doc = AttackerDoc {
        kappa: a.kappa,
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
    };
    write_policy(&a.out, &solution, doc)?;

    let mut out = String::new();
    writeln!(out, "defender initial value {value}").unwrap();
    writeln!(out, "attacker baseline      {baseline}").unwrap();
    writeln!(out, "budget {budget} ({budget_note})").unwrap();
    writeln!(out, "defender states {}", dmdp.n_states()).unwrap();
    if dmdp.value_suppression_only() {
        writeln!(out, "no traps: value suppression only").unwrap();
    }
    writeln!(
        out,
        "construction {:.6}s, planning {:.6}s",
        (t1 - t0).as_secs_f64(),
        (t2 - t1).as_secs_f64()
    )
    .unwrap();
    writeln!(
        out,
        "identities {}: {} exhausted states (max gap {:e}), {} trap states ({} nonzero)",
        if ids.holds(1e-9) { "ok" } else { "FAILED" },
        ids.exhausted_checked,
        ids.max_exhausted_gap,
        ids.trap_checked,
        ids.trap_nonzero
    )
    .unwrap();
    writeln!(out, "policy written to {}", a.out.display()).unwrap();
    Ok(out)
}

/// One line of the `simulate --csv` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub mode: String,
    pub episodes: usize,
    pub seed: u64,
    pub kappa: f64,
    pub budget: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trapped: usize,
    pub interventions: usize,
    pub impossible_selects: usize,
    pub over_budget: usize,
    pub bound: Option<f64>,
    pub bound_ok: Option<bool>,
}

impl SimulationRow {
    fn new(mode: &str, a: &SimulateArgs, kappa: f64, budget: usize, est: &ReturnEstimate) -> Self {
        Self {
            mode: mode.into(),
            episodes: est.episodes,
            seed: a.seed,
            kappa,
            budget,
            mean: est.mean,
            stderr: est.stderr,
            trapped: est.trapped,
            interventions: est.interventions,
            impossible_selects: est.impossible_selects,
            over_budget: est.over_budget,
            bound: None,
            bound_ok: None,
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<String, CliError> {
    if a.episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    if a.horizon == Some(0) {
        return Err(CliError::usage("--horizon must be at least 1"));
    }
    let inst = read_instance(&a.instance)?;
    let policy = a.policy.as_deref().map(read_policy).transpose()?;
    if let Some((sol, _)) = &policy {
        if sol.fingerprint() != inst.fingerprint() {
            return Err(CliError {
                code: EXIT_MISMATCH,
                message: "policy fingerprint does not match the instance".into(),
            });
        }
    }
    let (kappa, cfg) = match &policy {
        Some((_, doc)) => (a.kappa.unwrap_or(doc.kappa), doc.config()),
        None => (a.kappa.unwrap_or(DEFAULT_KAPPA), SolverConfig::default()),
    };
    if kappa.is_nan() || kappa < 0.0 {
        return Err(CliError::usage("--kappa must be non-negative"));
    }
    let attacker = AttackerModel::build(inst.believed.clone(), kappa, cfg)?;
    let undefended = estimate_return(&inst, &attacker, None, 0, a.episodes, a.horizon, a.seed)?;
    let mut rows = vec![SimulationRow::new("undefended", a, kappa, 0, &undefended)];
    let mut out = String::new();
    writeln!(
        out,
        "undefended return {:.6} ± {:.6} over {} episodes",
        undefended.mean, undefended.stderr, undefended.episodes
    )
    .unwrap();

    if let Some((sol, _)) = &policy {
        let budget = sol.budget();
        let defended = match &a.traces {
            Some(path) => {
                let mut writer = TraceWriter::create(path)?;
                let start = inst.truth.initial_state();
                let mut failure = None;
                let est = simulate(&inst, &attacker, Some(sol), budget, a.episodes, a.horizon, a.seed, |i, rec| {
                    if failure.is_none() {
                        failure = writer.write(&TraceLine::new(i, start, rec)).err();
                    }
                })?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                writer.finish()?;
                est
            }
            None => estimate_return(&inst, &attacker, Some(sol), budget, a.episodes, a.horizon, a.seed)?,
        };
        let value = defender_initial_value(sol, &attacker);
        let slack = cfg.tolerance / (1.0 - inst.truth.gamma());
        let bound = BoundReport::new(defended.mean, defended.stderr, value.abs(), slack, a.episodes);
        writeln!(
            out,
            "defended return   {:.6} ± {:.6}, trapped {}/{}, interventions {}",
            defended.mean, defended.stderr, defended.trapped, defended.episodes, defended.interventions
        )
        .unwrap();
        writeln!(
            out,
            "impossible selects {}, episodes over budget {}",
            defended.impossible_selects, defended.over_budget
        )
        .unwrap();
        writeln!(
            out,
            "bound |V| = {:.6}: {}",
            bound.bound,
            if bound.violated { "VIOLATED" } else { "ok" }
        )
        .unwrap();
        let mut row = SimulationRow::new("defended", a, kappa, budget, &defended);
        row.bound = Some(bound.bound);
        row.bound_ok = Some(!bound.violated);
        rows.push(row);
    }
    if let Some(path) = &a.csv {
        write_csv(path, &rows)?;
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), FormatError> {
    let err = |message: String| FormatError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

fn cmd_bench(a: &BenchArgs) -> Result<String, CliError> {
    let cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_scale(),
    };
    let report = run_benchmark(&cfg, Some(&a.out))?;
    write_report(&a.out, &report)?;
    let mut out = String::new();
    writeln!(
        out,
        "{:<24} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "instance", "status", "baseline", "defender", "construct", "plan"
    )
    .unwrap();
    let num = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
    for r in &report.rows {
        let status = if r.is_ok() { "ok" } else { r.status.split(':').next().unwrap_or("") };
        writeln!(
            out,
            "{:<24} {:>8} {:>12} {:>12} {:>10} {:>10}",
            r.instance,
            status,
            num(r.attacker_baseline, 4),
            num(r.defender_value, 4),
            num(r.construction_secs, 3),
            num(r.planning_secs, 3)
        )
        .unwrap();
    }
    let m = &report.manifest;
    if !m.value_reduction_exceptions.is_empty() {
        writeln!(out, "value not reduced: {}", m.value_reduction_exceptions.join(", ")).unwrap();
    }
    if !m.bound_violations.is_empty() {
        writeln!(out, "bound violated: {}", m.bound_violations.join(", ")).unwrap();
    }
    writeln!(
        out,
        "wrote {} and {}",
        a.out.join(METRICS_FILE).display(),
        a.out.join(MANIFEST_FILE).display()
    )
    .unwrap();
    Ok(out)
}
