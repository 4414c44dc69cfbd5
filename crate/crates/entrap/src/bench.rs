//! Benchmark sweep: generate, plan and simulate every configured instance,
//! then emit one metrics row per instance plus one aggregate row per
//! (family, size).

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use entrap_core::attacker::AttackerModel;
use entrap_core::budget::{compute_budget, BudgetResult};
use entrap_core::defender::{
    check_identities, compile_defender_mdp, defender_initial_value, solve_defender, BoundReport, CompileOptions,
    DefenderMdp, DefenderSolution,
};
use entrap_core::domains::{
    generate_four_rooms, generate_gridworld, generate_puddle, generate_rock_sampling, DomainError, DomainInstance,
    DomainKind, FourRoomsParams, GridworldParams, PuddleParams, RockParams,
};
use entrap_core::sim::{estimate_return, simulate, ReturnEstimate};
use entrap_core::{SolverConfig, TabularMdp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunConfig};
use crate::formats::{write_manifest, FormatError, TraceLine, TraceWriter};

/// Defender values within this distance of zero count as guaranteed entrapment.
pub const ENTRAPMENT_TOLERANCE: f64 = 1e-6;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_DIR: &str = "traces";

/// Trailing CSV columns that carry wall-clock time.
pub const TIMING_COLUMNS: [&str; 2] = ["construction_secs", "planning_secs"];

/// One generated instance of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub kind: DomainKind,
    pub size: usize,
    pub delta: Option<f64>,
    pub layout_seed: u64,
    pub trap_seed: u64,
    pub n_traps: usize,
    pub kappa: f64,
    pub slip: f64,
    pub rocks: Option<usize>,
    pub reward: Option<f64>,
}

impl InstanceSpec {
    /// Family label shared by all trap seeds, e.g. `gridworld-4x4`.
    pub fn family(&self) -> String {
        match self.delta {
            Some(d) => format!("{}-d{d}", self.kind.name()),
            None => format!("{}-{}x{}", self.kind.name(), self.size, self.size),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-t{}", self.family(), self.trap_seed)
    }

    pub fn generate(&self, run: &RunConfig) -> Result<DomainInstance, DomainError> {
        match self.kind {
            DomainKind::Gridworld => generate_gridworld(&GridworldParams {
                size: self.size,
                slip: self.slip,
                n_traps: self.n_traps,
                seed: self.layout_seed,
                trap_seed: self.trap_seed,
                gamma: run.gamma,
                ..Default::default()
            }),
            DomainKind::FourRooms => generate_four_rooms(&FourRoomsParams {
                size: self.size,
                slip: self.slip,
                n_traps: self.n_traps,
                seed: self.layout_seed,
                trap_seed: self.trap_seed,
                gamma: run.gamma,
                ..Default::default()
            }),
            DomainKind::RockSampling => {
                let d = RockParams::default();
                generate_rock_sampling(&RockParams {
                    size: self.size,
                    slip: self.slip,
                    n_rocks: self.rocks.unwrap_or(d.n_rocks),
                    n_traps: self.n_traps,
                    seed: self.layout_seed,
                    trap_seed: self.trap_seed,
                    gamma: run.gamma,
                    rock_reward: self.reward.unwrap_or(d.rock_reward),
                    ..d
                })
            }
            DomainKind::Puddle => {
                let d = PuddleParams::default();
                generate_puddle(&PuddleParams {
                    delta: self.delta.unwrap_or(d.delta),
                    slip: self.slip,
                    n_traps: self.n_traps,
                    seed: self.layout_seed,
                    trap_seed: self.trap_seed,
                    gamma: run.gamma,
                    step_reward: self.reward.unwrap_or(d.step_reward),
                    ..d
                })
            }
            DomainKind::Showroom | DomainKind::External => Err(DomainError::InvalidParameter("not a benchmark family")),
        }
    }
}

/// All instances of a config, ordered by domain entry, size and trap seed.
pub fn expand(cfg: &ExperimentConfig) -> Vec<InstanceSpec> {
    let mut out = Vec::new();
    for d in &cfg.domains {
        let kind = d.domain_kind().expect("validated config");
        let points: Vec<(usize, Option<f64>)> = if kind == DomainKind::Puddle {
            d.deltas.iter().map(|&x| (0, Some(x))).collect()
        } else {
            d.sizes.iter().map(|&n| (n, None)).collect()
        };
        for (size, delta) in points {
            for &trap_seed in &cfg.run.trap_seeds {
                out.push(InstanceSpec {
                    kind,
                    size,
                    delta,
                    layout_seed: d.seed,
                    trap_seed,
                    n_traps: d.traps,
                    kappa: d.kappa.unwrap_or(cfg.run.kappa),
                    slip: d.slip.unwrap_or(cfg.run.slip),
                    rocks: d.rocks,
                    reward: d.reward,
                });
            }
        }
    }
    out
}

/// One CSV row. Metric fields are empty when the instance did not finish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub row_kind: String,
    pub domain: String,
    pub instance: String,
    pub size: usize,
    pub delta: Option<f64>,
    pub trap_seed: Option<u64>,
    pub status: String,
    pub states: Option<usize>,
    pub defender_states: Option<usize>,
    pub budget_k: Option<usize>,
    pub budget_capped: Option<bool>,
    pub budget: Option<usize>,
    pub kappa: f64,
    pub episodes: usize,
    pub seed: u64,
    pub attacker_baseline: Option<f64>,
    pub attacker_mc: Option<f64>,
    pub attacker_mc_stderr: Option<f64>,
    pub defender_value: Option<f64>,
    pub defender_mc: Option<f64>,
    pub defender_mc_stderr: Option<f64>,
    pub bound_ok: Option<bool>,
    pub identities_ok: Option<bool>,
    pub trapped_fraction: Option<f64>,
    pub interventions: Option<usize>,
    pub impossible_selects: Option<usize>,
    pub over_budget: Option<usize>,
    pub construction_secs: Option<f64>,
    pub planning_secs: Option<f64>,
}

impl MetricsRow {
    fn pending(spec: &InstanceSpec, run: &RunConfig, status: String) -> Self {
        Self {
            row_kind: "instance".into(),
            domain: spec.kind.name().into(),
            instance: spec.label(),
            size: spec.size,
            delta: spec.delta,
            trap_seed: Some(spec.trap_seed),
            status,
            states: None,
            defender_states: None,
            budget_k: None,
            budget_capped: None,
            budget: None,
            kappa: spec.kappa,
            episodes: run.episodes,
            seed: run.seed,
            attacker_baseline: None,
            attacker_mc: None,
            attacker_mc_stderr: None,
            defender_value: None,
            defender_mc: None,
            defender_mc_stderr: None,
            bound_ok: None,
            identities_ok: None,
            trapped_fraction: None,
            interventions: None,
            impossible_selects: None,
            over_budget: None,
            construction_secs: None,
            planning_secs: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Budget as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub k: usize,
    pub capped: bool,
    pub usable: usize,
    /// Alternating state and action labels of the witness trajectory.
    pub witness: Option<Vec<String>>,
}

impl BudgetRecord {
    pub fn new(result: &BudgetResult, cap: usize, mdp: &TabularMdp) -> Self {
        Self {
            k: result.k,
            capped: result.capped,
            usable: result.usable_budget(cap),
            witness: result.witness.as_ref().map(|w| witness_labels(mdp, w)),
        }
    }
}

pub fn witness_labels(mdp: &TabularMdp, w: &entrap_core::Trajectory) -> Vec<String> {
    let mut out = vec![mdp.state_label(w.first_state()).to_string()];
    for (_, a, next) in w.steps() {
        out.push(mdp.action_label(a).to_string());
        out.push(mdp.state_label(next).to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub instance: String,
    pub domain: String,
    pub layout_seed: u64,
    pub trap_seed: u64,
    pub status: String,
    pub fingerprint: Option<String>,
    pub goal_reachable: Option<bool>,
    pub budget: Option<BudgetRecord>,
    pub defender_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrapmentRecord {
    pub family: String,
    /// Trap seeds whose defender value is zero.
    pub zero_value_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareRecord {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: SoftwareRecord,
    pub config: ExperimentConfig,
    pub instances: Vec<ManifestInstance>,
    pub entrapment: Vec<EntrapmentRecord>,
    /// Instances where `|defender value|` is not below a positive baseline.
    pub value_reduction_exceptions: Vec<String>,
    pub bound_violations: Vec<String>,
}

/// Everything `run_benchmark` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Instance rows in sweep order, then aggregate rows.
    pub rows: Vec<MetricsRow>,
    pub manifest: Manifest,
}

impl BenchReport {
    pub fn instance_rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(|r| r.row_kind == "instance")
    }
}

/// Fully evaluated instance, before it is flattened into a row.
pub struct Evaluation {
    pub instance: DomainInstance,
    pub attacker: AttackerModel,
    pub budget: BudgetResult,
    pub usable_budget: usize,
    pub defender: DefenderMdp,
    pub solution: DefenderSolution,
    pub baseline: f64,
    pub defender_value: f64,
    pub undefended: ReturnEstimate,
    pub defended: ReturnEstimate,
    pub bound: BoundReport,
    pub identities_ok: bool,
    pub construction: Duration,
    pub planning: Duration,
}

pub fn solver_config(run: &RunConfig) -> SolverConfig {
    SolverConfig {
        tolerance: run.tolerance,
        max_iterations: run.max_iterations,
    }
}

/// Attacker solve, budget search and defender compile; the timed
/// "construction" step.
fn construct(
    instance: &DomainInstance,
    spec_kappa: f64,
    run: &RunConfig,
) -> Result<(AttackerModel, BudgetResult, usize, DefenderMdp), String> {
    let cfg = solver_config(run);
    let attacker = AttackerModel::build(instance.believed.clone(), spec_kappa, cfg).map_err(|e| e.to_string())?;
    let budget = compute_budget(&instance.believed, run.budget_cap);
    let usable = budget.usable_budget(run.budget_cap).max(1);
    let options = CompileOptions {
        prune_unreachable: true,
        state_limit: Some(run.state_limit),
    };
    let defender = compile_defender_mdp(&attacker, &instance.traps, usable, options).map_err(|e| e.to_string())?;
    Ok((attacker, budget, usable, defender))
}

/// Runs the whole pipeline on one instance.
pub fn evaluate(spec: &InstanceSpec, run: &RunConfig, trace: Option<&Path>) -> Result<Evaluation, String> {
    let instance = spec.generate(run).map_err(|e| e.to_string())?;
    let cfg = solver_config(run);
    let mut best: Option<(Duration, Duration)> = None;
    let mut built = None;
    for _ in 0..run.timing_repeats {
        let t0 = Instant::now();
        let (attacker, budget, usable, defender) = construct(&instance, spec.kappa, run)?;
        let t1 = Instant::now();
        let solution = solve_defender(&defender, cfg).map_err(|e| e.to_string())?;
        let t2 = Instant::now();
        let (c, p) = (t1 - t0, t2 - t1);
        best = Some(match best {
            None => (c, p),
            Some((bc, bp)) => (bc.min(c), bp.min(p)),
        });
        built = Some((attacker, budget, usable, defender, solution));
    }
    let (construction, planning) = best.expect("at least one repeat");
    let (attacker, budget, usable, defender, solution) = built.expect("at least one repeat");

    let baseline = attacker.baseline_value(cfg).map_err(|e| e.to_string())?;
    let defender_value = defender_initial_value(&solution, &attacker);
    let identities_ok = check_identities(&solution, &attacker).holds(1e-9);
    let undefended =
        estimate_return(&instance, &attacker, None, 0, run.episodes, run.horizon, run.seed).map_err(|e| e.to_string())?;
    let defended = match trace {
        Some(path) => {
            let mut writer = TraceWriter::create(path).map_err(|e| e.to_string())?;
            let start = instance.truth.initial_state();
            let mut failure: Option<FormatError> = None;
            let est = simulate(&instance, &attacker, Some(&solution), usable, run.episodes, run.horizon, run.seed, |i, rec| {
                if failure.is_none() {
                    if let Err(e) = writer.write(&TraceLine::new(i, start, rec)) {
                        failure = Some(e);
                    }
                }
            })
            .map_err(|e| e.to_string())?;
            if let Some(e) = failure {
                return Err(e.to_string());
            }
            writer.finish().map_err(|e| e.to_string())?;
            est
        }
        None => estimate_return(&instance, &attacker, Some(&solution), usable, run.episodes, run.horizon, run.seed)
            .map_err(|e| e.to_string())?,
    };
    let slack = run.tolerance / (1.0 - instance.truth.gamma());
    let bound = BoundReport::new(defended.mean, defended.stderr, defender_value.abs(), slack, run.episodes);
    Ok(Evaluation {
        instance,
        attacker,
        budget,
        usable_budget: usable,
        defender,
        solution,
        baseline,
        defender_value,
        undefended,
        defended,
        bound,
        identities_ok,
        construction,
        planning,
    })
}

struct Outcome {
    row: MetricsRow,
    manifest: ManifestInstance,
}

fn outcome_of(spec: &InstanceSpec, run: &RunConfig, result: Result<Evaluation, String>, timed_out: bool) -> Outcome {
    let mut manifest = ManifestInstance {
        instance: spec.label(),
        domain: spec.kind.name().into(),
        layout_seed: spec.layout_seed,
        trap_seed: spec.trap_seed,
        status: String::new(),
        fingerprint: None,
        goal_reachable: None,
        budget: None,
        defender_value: None,
    };
    let row = match (timed_out, result) {
        (true, _) => MetricsRow::pending(spec, run, "timeout".into()),
        (false, Err(e)) => MetricsRow::pending(spec, run, format!("error: {e}")),
        (false, Ok(ev)) => {
            manifest.fingerprint = Some(ev.instance.fingerprint().to_hex());
            manifest.goal_reachable = Some(ev.instance.metadata.goal_reachable);
            manifest.budget = Some(BudgetRecord::new(&ev.budget, run.budget_cap, &ev.instance.believed));
            manifest.defender_value = Some(ev.defender_value);
            MetricsRow {
                states: Some(ev.instance.believed.n_states()),
                defender_states: Some(ev.defender.n_states()),
                budget_k: Some(ev.budget.k),
                budget_capped: Some(ev.budget.capped),
                budget: Some(ev.usable_budget),
                attacker_baseline: Some(ev.baseline),
                attacker_mc: Some(ev.undefended.mean),
                attacker_mc_stderr: Some(ev.undefended.stderr),
                defender_value: Some(ev.defender_value),
                defender_mc: Some(ev.defended.mean),
                defender_mc_stderr: Some(ev.defended.stderr),
                bound_ok: Some(!ev.bound.violated),
                identities_ok: Some(ev.identities_ok),
                trapped_fraction: Some(ev.defended.trapped as f64 / ev.defended.episodes as f64),
                interventions: Some(ev.defended.interventions),
                impossible_selects: Some(ev.defended.impossible_selects),
                over_budget: Some(ev.defended.over_budget),
                construction_secs: Some(ev.construction.as_secs_f64()),
                planning_secs: Some(ev.planning.as_secs_f64()),
                ..MetricsRow::pending(spec, run, "ok".into())
            }
        }
    };
    manifest.status = row.status.clone();
    Outcome { row, manifest }
}

/// Evaluates one instance on its own thread, giving up after the timeout.
/// A timed-out worker is detached; its result is discarded.
fn evaluate_with_timeout(spec: &InstanceSpec, run: &RunConfig, trace: Option<PathBuf>) -> Outcome {
    let (tx, rx) = mpsc::channel();
    let (s, r) = (spec.clone(), run.clone());
    std::thread::spawn(move || {
        let result = evaluate(&s, &r, trace.as_deref());
        let _ = tx.send(result);
    });
    match rx.recv_timeout(Duration::from_secs(run.timeout_secs)) {
        Ok(result) => outcome_of(spec, run, result, false),
        Err(mpsc::RecvTimeoutError::Timeout) => outcome_of(spec, run, Err(String::new()), true),
        Err(mpsc::RecvTimeoutError::Disconnected) => outcome_of(spec, run, Err("worker panicked".into()), false),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| entrap_core::pairwise_sum(&v) / v.len() as f64)
}

/// Mean over the family's finished rows; the stderr of a mean of
/// independent estimates is `sqrt(sum se^2) / n`.
fn aggregate(rows: &[MetricsRow]) -> MetricsRow {
    let ok: Vec<&MetricsRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let first = &rows[0];
    let status = if ok.len() == rows.len() {
        "ok".to_string()
    } else {
        format!("partial {}/{}", ok.len(), rows.len())
    };
    let avg = |f: fn(&MetricsRow) -> Option<f64>| mean(ok.iter().filter_map(|r| f(r)));
    let pooled = |f: fn(&MetricsRow) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).map(|s| s * s).collect();
        (!v.is_empty()).then(|| entrap_core::pairwise_sum(&v).sqrt() / v.len() as f64)
    };
    let all = |f: fn(&MetricsRow) -> Option<bool>| (!ok.is_empty()).then(|| ok.iter().all(|r| f(r) == Some(true)));
    let sum = |f: fn(&MetricsRow) -> Option<usize>| (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum());
    let family = rows[0].instance.rsplit_once("-t").map_or(first.instance.clone(), |(f, _)| f.to_string());
    MetricsRow {
        row_kind: "aggregate".into(),
        domain: first.domain.clone(),
        instance: family,
        size: first.size,
        delta: first.delta,
        trap_seed: None,
        status,
        states: None,
        defender_states: None,
        budget_k: None,
        budget_capped: None,
        budget: None,
        kappa: first.kappa,
        episodes: first.episodes,
        seed: first.seed,
        attacker_baseline: avg(|r| r.attacker_baseline),
        attacker_mc: avg(|r| r.attacker_mc),
        attacker_mc_stderr: pooled(|r| r.attacker_mc_stderr),
        defender_value: avg(|r| r.defender_value),
        defender_mc: avg(|r| r.defender_mc),
        defender_mc_stderr: pooled(|r| r.defender_mc_stderr),
        bound_ok: all(|r| r.bound_ok),
        identities_ok: all(|r| r.identities_ok),
        trapped_fraction: avg(|r| r.trapped_fraction),
        interventions: sum(|r| r.interventions),
        impossible_selects: sum(|r| r.impossible_selects),
        over_budget: sum(|r| r.over_budget),
        construction_secs: avg(|r| r.construction_secs),
        planning_secs: avg(|r| r.planning_secs),
    }
}

/// Runs the sweep. With `out`, traces (when enabled) are written below it;
/// call [`write_report`] to store the CSV and manifest.
pub fn run_benchmark(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<BenchReport, FormatError> {
    let specs = expand(cfg);
    let run = &cfg.run;
    let trace_dir = match (run.traces, out) {
        (true, Some(dir)) => {
            let d = dir.join(TRACE_DIR);
            std::fs::create_dir_all(&d).map_err(|source| FormatError::Io { path: d.clone(), source })?;
            Some(d)
        }
        _ => None,
    };
    let work = || -> Vec<Outcome> {
        specs
            .par_iter()
            .map(|s| {
                let trace = trace_dir.as_ref().map(|d| d.join(format!("{}.jsonl", s.label())));
                evaluate_with_timeout(s, run, trace)
            })
            .collect()
    };
    let outcomes = if run.parallelism == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(run.parallelism)
            .build()
            .expect("thread pool")
            .install(work)
    };

    let mut rows: Vec<MetricsRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let mut entrapment = Vec::new();
    let mut families: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        match families.iter_mut().find(|(f, _)| *f == s.family()) {
            Some((_, idx)) => idx.push(i),
            None => families.push((s.family(), vec![i])),
        }
    }
    for (family, idx) in &families {
        let group: Vec<MetricsRow> = idx.iter().map(|&i| rows[i].clone()).collect();
        rows.push(aggregate(&group));
        entrapment.push(EntrapmentRecord {
            family: family.clone(),
            zero_value_seeds: idx
                .iter()
                .filter(|&&i| rows[i].defender_value.is_some_and(|v| v.abs() <= ENTRAPMENT_TOLERANCE))
                .map(|&i| specs[i].trap_seed)
                .collect(),
        });
    }
    let value_reduction_exceptions = rows
        .iter()
        .filter(|r| r.row_kind == "instance" && r.is_ok())
        .filter(|r| {
            let (v, b) = (r.defender_value.unwrap_or(0.0).abs(), r.attacker_baseline.unwrap_or(0.0));
            !(v < b || (b == 0.0 && v == 0.0))
        })
        .map(|r| r.instance.clone())
        .collect();
    let bound_violations = rows
        .iter()
        .filter(|r| r.row_kind == "instance" && r.bound_ok == Some(false))
        .map(|r| r.instance.clone())
        .collect();
    let manifest = Manifest {
        software: SoftwareRecord {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        config: cfg.clone(),
        instances: outcomes.into_iter().map(|o| o.manifest).collect(),
        entrapment,
        value_reduction_exceptions,
        bound_violations,
    };
    Ok(BenchReport { rows, manifest })
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), FormatError> {
    let io = |e: csv::Error| FormatError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, FormatError> {
    let io = |e: csv::Error| FormatError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().map(|row| row.map_err(io)).collect()
}

/// Writes `metrics.csv` and `manifest.json` into `dir`.
pub fn write_report(dir: &Path, report: &BenchReport) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_metrics_csv(&dir.join(METRICS_FILE), &report.rows)?;
    write_manifest(&dir.join(MANIFEST_FILE), &report.manifest)
}

/// CSV text with the timing columns removed, for determinism comparisons.
pub fn strip_timing_columns(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.truncate(fields.len().saturating_sub(TIMING_COLUMNS.len()));
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::parse(
            "[run]\nepisodes = 200\ntrap_seeds = [0, 1]\n\
             [[domain]]\nkind = \"gridworld\"\nsizes = [4]\ntraps = 2\n\
             [[domain]]\nkind = \"puddle\"\ndeltas = [0.5]\ntraps = 4\n",
        )
        .unwrap()
    }

    #[test]
    fn expansion_order_and_labels() {
        let specs = expand(&tiny());
        let labels: Vec<String> = specs.iter().map(InstanceSpec::label).collect();
        assert_eq!(labels, ["gridworld-4x4-t0", "gridworld-4x4-t1", "puddle-d0.5-t0", "puddle-d0.5-t1"]);
    }

    #[test]
    fn sweep_rows_and_aggregates() {
        let report = run_benchmark(&tiny(), None).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.instance_rows().all(MetricsRow::is_ok));
        let agg = &report.rows[4];
        assert_eq!(agg.row_kind, "aggregate");
        assert_eq!(agg.instance, "gridworld-4x4");
        let mean = (report.rows[0].attacker_baseline.unwrap() + report.rows[1].attacker_baseline.unwrap()) / 2.0;
        assert!((agg.attacker_baseline.unwrap() - mean).abs() < 1e-12);
        assert!(report.manifest.bound_violations.is_empty());
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let cfg = ExperimentConfig::parse("[run]\nepisodes = 10\ntrap_seeds = [0]\n[[domain]]\nkind = \"puddle\"\ndeltas = [0.7]\ntraps = 1\n").unwrap();
        let report = run_benchmark(&cfg, None).unwrap();
        assert!(report.rows[0].status.starts_with("error:"), "{}", report.rows[0].status);
        assert_eq!(report.rows[1].status, "partial 0/1");
    }

    #[test]
    fn csv_round_trip_and_timing_strip() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_benchmark(&tiny(), None).unwrap();
        write_report(dir.path(), &report).unwrap();
        let back = read_metrics_csv(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(back, report.rows);
        let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.ends_with(&TIMING_COLUMNS.join(",")));
        assert!(!strip_timing_columns(&text).contains("planning_secs"));
    }
}
