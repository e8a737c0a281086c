//! Config-driven runs behind the `asvd` command line.
//!
//! Every subcommand reads a JSON config (unknown keys are errors), writes
//! its artifacts into one output directory and refuses to reuse a
//! non-empty directory unless asked to.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continual::{data_spec, execute, RunConfig, TrainerKind};
use crate::error::{Error, Result};
use crate::importance::profile_for_task;
use crate::linalg::{dot, norm, symmetric_eigendecomposition, Matrix};
use crate::metrics::{write_summary_csv, RunReport, SUMMARY_HEADER};
use crate::network::{Activation, LayerSpec, LossKind, Network, Sample, Target};
use crate::seeding::substream;
use crate::spectrum::{
    classify_noise, direction_activation_norms, prune_low_rank, spectrum_stats, write_direction_csv,
    write_prune_csv, write_stats_csv, Keep, LayerSelector, NoiseClassification, PruneReport, PruneSpec,
};
use crate::subspace::RetentionConfig;
use crate::tasks::{generate, TaskStreamSpec};
use crate::theory::{
    block_diagonal_hessian, block_diagonal_measure, bound_hierarchy_experiment, construct_instance,
    exact_hessian, matrix_with_spectrum, rayleigh_check, second_order_check_with, BoundReport,
    HierarchyStatus, InstanceShape,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Default parent directory for relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "ASVD_OUTPUT_ROOT";

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn check_schema(version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "schema_version {version} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Where and how a subcommand writes.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    /// Explicit output directory; overrides the config's.
    pub output_dir: Option<PathBuf>,
    /// Parent for relative output directories, usually from [`OUTPUT_ROOT_ENV`].
    pub output_root: Option<PathBuf>,
    pub overwrite: bool,
}

impl OutputOptions {
    fn resolve(&self, from_config: Option<&Path>, default_name: &str) -> Result<PathBuf> {
        let dir = self
            .output_dir
            .clone()
            .or_else(|| from_config.map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from(default_name));
        let dir = match &self.output_root {
            Some(root) if dir.is_relative() => root.join(dir),
            _ => dir,
        };
        prepare_dir(&dir, self.overwrite)?;
        Ok(dir)
    }
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !overwrite {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes through a temporary sibling and renames into place.
fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        std::io::Write::flush(&mut w)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub run: RunConfig,
    /// Trainers to compare; defaults to `run.training.trainer` alone.
    #[serde(default)]
    pub trainers: Option<Vec<TrainerKind>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Each order produces its own runs; `run.task_order` is used when absent.
    #[serde(default)]
    pub task_orders: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run: RunConfig::default(),
            trainers: None,
            seeds: default_seeds(),
            task_orders: None,
            output_dir: None,
        }
    }
}

/// One concrete run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunJob {
    pub run_id: String,
    pub trainer: TrainerKind,
    pub seed: u64,
    pub order_index: Option<usize>,
    pub config: RunConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if matches!(&self.trainers, Some(t) if t.is_empty()) {
            return Err(Error::InvalidConfig("trainers must not be empty".into()));
        }
        for job in self.jobs() {
            job.config.validate()?;
        }
        Ok(())
    }

    pub fn jobs(&self) -> Vec<RunJob> {
        let trainers = self.trainers.clone().unwrap_or_else(|| vec![self.run.training.trainer]);
        let orders: Vec<(Option<usize>, Option<Vec<usize>>)> = match &self.task_orders {
            Some(list) => list.iter().cloned().enumerate().map(|(i, o)| (Some(i), Some(o))).collect(),
            None => vec![(None, self.run.task_order.clone())],
        };
        let mut jobs = Vec::new();
        for &trainer in &trainers {
            for (order_index, order) in &orders {
                for &seed in &self.seeds {
                    let mut config = self.run.with_trainer(trainer);
                    config.task_order = order.clone();
                    let run_id = match order_index {
                        Some(i) => format!("{}_order{i}_seed{seed}", trainer.name()),
                        None => format!("{}_seed{seed}", trainer.name()),
                    };
                    jobs.push(RunJob {
                        run_id,
                        trainer,
                        seed,
                        order_index: *order_index,
                        config,
                    });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub runs: Vec<(RunJob, RunReport)>,
}

/// Runs every (trainer, task order, seed) combination.
///
/// Writes `<run_id>.report.json`, `<run_id>.ckpt` and the run's task stream
/// `<run_id>.tasks.json` per run, the resolved config, `summary.csv`, and
/// `comparison.csv` when more than one trainer ran.
pub fn cmd_run(config_path: &Path, opts: &OutputOptions) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_experiment(&cfg, opts)
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &OutputOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = opts.resolve(cfg.output_dir.as_deref(), "asvd-run")?;
    write_json(&dir.join("config.resolved.json"), cfg)?;

    let jobs = cfg.jobs();
    let results: Vec<Result<RunReport>> = jobs
        .par_iter()
        .map(|job| {
            let outcome = execute(&job.config, job.seed).map_err(|e| Error::Run {
                run_id: job.run_id.clone(),
                source: Box::new(e),
            })?;
            let mut text = outcome.report.to_json()?;
            text.push('\n');
            fs::write(dir.join(format!("{}.report.json", job.run_id)), text)?;
            outcome.network.save_checkpoint(&dir.join(format!("{}.ckpt", job.run_id)))?;
            write_json(&dir.join(format!("{}.tasks.json", job.run_id)), &data_spec(&job.config, job.seed))?;
            Ok(outcome.report)
        })
        .collect();
    let mut runs = Vec::with_capacity(jobs.len());
    for (job, r) in jobs.into_iter().zip(results) {
        runs.push((job, r?));
    }

    write_atomic(&dir.join("summary.csv"), |w| {
        write_summary_csv(runs.iter().map(|(j, r)| (j.run_id.as_str(), r)), w)
    })?;
    let trainers: Vec<TrainerKind> = cfg.trainers.clone().unwrap_or_default();
    if trainers.len() > 1 {
        write_atomic(&dir.join("comparison.csv"), |w| write_comparison_csv(&runs, &trainers, w))?;
    }
    Ok(RunSummary { output_dir: dir, runs })
}

/// One row per (task order, seed) with AA and BWT for each trainer.
fn write_comparison_csv(
    runs: &[(RunJob, RunReport)],
    trainers: &[TrainerKind],
    out: impl std::io::Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["order".to_string(), "seed".to_string()];
    for t in trainers {
        header.push(format!("{}_aa", t.name()));
        header.push(format!("{}_bwt", t.name()));
    }
    w.write_record(&header)?;
    let mut keys: Vec<(Option<usize>, u64)> = runs.iter().map(|(j, _)| (j.order_index, j.seed)).collect();
    keys.sort();
    keys.dedup();
    for (order, seed) in keys {
        let mut rec = vec![order.map(|o| o.to_string()).unwrap_or_default(), seed.to_string()];
        for &t in trainers {
            match runs
                .iter()
                .find(|(j, _)| j.trainer == t && j.order_index == order && j.seed == seed)
            {
                Some((_, r)) => {
                    rec.push(r.aa.to_string());
                    rec.push(r.bwt.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Activations allowed in Hessian work. `relu` is not smooth and is
/// rejected when the config is parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothActivation {
    Identity,
    Tanh,
}

impl From<SmoothActivation> for Activation {
    fn from(a: SmoothActivation) -> Self {
        match a {
            SmoothActivation::Identity => Activation::Identity,
            SmoothActivation::Tanh => Activation::Tanh,
        }
    }
}

/// A small teacher network whose own outputs are the targets, so its
/// weights sit exactly at a minimum of the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    /// Layer widths including input and output.
    pub widths: Vec<usize>,
    pub activation: SmoothActivation,
    pub samples: usize,
    /// Initial `‖Δθ‖` of the second-order sweep.
    pub initial_norm: f64,
    pub halvings: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            widths: vec![4, 4, 4, 4],
            activation: SmoothActivation::Tanh,
            samples: 32,
            initial_norm: 1e-2,
            halvings: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Constructed hierarchy trials.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Also run one trial with identical block spectra and uniform importance.
    #[serde(default = "default_true")]
    pub include_tied_trial: bool,
    #[serde(default)]
    pub instance: InstanceShape,
    #[serde(default)]
    pub retention: RetentionConfig,
    /// Uniform retained fraction of the fixed-rank comparator.
    #[serde(default = "default_fixed_fraction")]
    pub fixed_fraction: f64,
    /// Update budget `c = ‖Δθ‖²`.
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_rayleigh_trials")]
    pub rayleigh_trials: usize,
    /// `null` skips the trained-network diagnostics.
    #[serde(default = "default_teacher")]
    pub teacher: Option<TeacherConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    50
}
fn default_true() -> bool {
    true
}
fn default_fixed_fraction() -> f64 {
    RetentionConfig::default().trr
}
fn default_budget() -> f64 {
    1.0
}
fn default_rayleigh_trials() -> usize {
    1000
}
fn default_teacher() -> Option<TeacherConfig> {
    Some(TeacherConfig::default())
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            trials: default_trials(),
            include_tied_trial: true,
            instance: InstanceShape::default(),
            retention: RetentionConfig::default(),
            fixed_fraction: default_fixed_fraction(),
            budget: default_budget(),
            rayleigh_trials: default_rayleigh_trials(),
            teacher: Some(TeacherConfig::default()),
            output_dir: None,
        }
    }
}

impl TheoryConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version)?;
        self.retention.validate()?;
        if !(0.0..=1.0).contains(&self.fixed_fraction) || !(self.budget >= 0.0) {
            return Err(Error::InvalidConfig("need fixed_fraction in [0, 1] and budget >= 0".into()));
        }
        if let Some(t) = &self.teacher {
            if t.widths.len() < 2 || t.widths.contains(&0) || t.samples == 0 {
                return Err(Error::InvalidConfig("teacher needs >= 2 positive widths and samples > 0".into()));
            }
            if !(t.initial_norm > 0.0) {
                return Err(Error::InvalidConfig("teacher.initial_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Maximum number of resamples per constructed trial.
pub const MAX_PREMISE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Constructed,
    Tied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryTrial {
    pub trial: usize,
    pub kind: TrialKind,
    /// Instances discarded because the importance premise failed.
    pub rejected: usize,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighSummary {
    pub trials: usize,
    pub violations: usize,
    pub min_slack: f64,
    /// Largest `|bound − quadratic form|` with `Δθ` the top eigenvector.
    pub top_eigenvector_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherDiagnostics {
    pub parameter_count: usize,
    pub gradient_norm: f64,
    pub off_block_ratio: f64,
    pub norms: Vec<f64>,
    pub relative_errors: Vec<f64>,
    /// Each halving at least halves the error, with 5% slack.
    pub convergence_ok: bool,
    pub importance: Vec<f64>,
    pub block_lambda_max: Vec<f64>,
    /// Pearson correlation of the two lists above; `None` if either is constant.
    pub importance_curvature_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: TheoryConfig,
    pub trials: Vec<TheoryTrial>,
    pub rayleigh: RayleighSummary,
    pub teacher: Option<TeacherDiagnostics>,
    pub checks: Vec<CheckLine>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct TheoryOutcome {
    pub output_dir: PathBuf,
    pub report: TheoryReport,
}

pub fn cmd_theory(config_path: &Path, opts: &OutputOptions) -> Result<TheoryOutcome> {
    let cfg = TheoryConfig::load(config_path)?;
    let dir = opts.resolve(cfg.output_dir.as_deref(), "asvd-theory")?;
    let report = run_theory(&cfg)?;
    write_json(&dir.join("bound_reports.json"), &report)?;
    write_atomic(&dir.join("bounds_summary.csv"), |w| write_bounds_csv(&report.trials, w))?;
    Ok(TheoryOutcome { output_dir: dir, report })
}

fn hierarchy_trial(cfg: &TheoryConfig, trial: usize) -> Result<TheoryTrial> {
    let mut rng = substream(cfg.seed, &format!("trial{trial}"));
    for rejected in 0..MAX_PREMISE_ATTEMPTS {
        let inst = construct_instance(&cfg.instance, &cfg.retention, cfg.fixed_fraction, &mut rng)?;
        if inst.premise_holds {
            let report =
                bound_hierarchy_experiment(&inst.bundle, &inst.importance, &cfg.retention, cfg.fixed_fraction, cfg.budget)?;
            return Ok(TheoryTrial {
                trial,
                kind: TrialKind::Constructed,
                rejected,
                report,
            });
        }
    }
    Err(Error::InvalidConfig(format!(
        "trial {trial}: no instance satisfied the importance premise in {MAX_PREMISE_ATTEMPTS} attempts"
    )))
}

fn tied_trial(cfg: &TheoryConfig, trial: usize) -> Result<TheoryTrial> {
    let mut rng = substream(cfg.seed, "tied");
    let n = cfg.instance.max_block;
    let spectrum: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
    let layers = cfg.instance.layers;
    let bundle = block_diagonal_hessian(&vec![spectrum; layers], &mut rng)?;
    let report = bound_hierarchy_experiment(&bundle, &vec![1.0; layers], &cfg.retention, cfg.fixed_fraction, cfg.budget)?;
    Ok(TheoryTrial {
        trial,
        kind: TrialKind::Tied,
        rejected: 0,
        report,
    })
}

fn rayleigh_trials(cfg: &TheoryConfig) -> Result<RayleighSummary> {
    let mut rng = substream(cfg.seed, "rayleigh");
    let mut summary = RayleighSummary {
        trials: cfg.rayleigh_trials,
        violations: 0,
        min_slack: f64::INFINITY,
        top_eigenvector_gap: 0.0,
    };
    for _ in 0..cfg.rayleigh_trials {
        let n = rng.random_range(2..=10);
        let spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let h = matrix_with_spectrum(&spectrum, &mut rng)?;
        let e = symmetric_eigendecomposition(&h)?;
        let scale = rng.random_range(0.01..10.0);
        let delta: Vec<f64> = (0..n).map(|_| scale * normal(&mut rng)).collect();
        let check = rayleigh_check(&h, e.max(), &delta)?;
        if !check.holds {
            summary.violations += 1;
        }
        summary.min_slack = summary.min_slack.min(check.slack);
        let top = rayleigh_check(&h, e.max(), &e.eigenvectors.column(0))?;
        summary.top_eigenvector_gap = summary.top_eigenvector_gap.max(top.slack.abs());
    }
    Ok(summary)
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let da: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let db: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let denom = norm(&da) * norm(&db);
    (denom > 0.0).then(|| dot(&da, &db) / denom)
}

/// A network together with a batch labelled by the network itself.
pub fn teacher_at_optimum(cfg: &TeacherConfig, seed: u64) -> Result<(Network, Vec<Sample>)> {
    let mut rng = substream(seed, "teacher");
    let last = cfg.widths.len() - 2;
    let specs: Vec<LayerSpec> = cfg
        .widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            input_dim: w[0],
            output_dim: w[1],
            activation: if i == last { Activation::Identity } else { cfg.activation.into() },
        })
        .collect();
    let net = Network::random(&specs, 1.5, &mut rng)?;
    let batch = (0..cfg.samples)
        .map(|_| {
            let x: Vec<f64> = (0..cfg.widths[0]).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = net.predict(&x)?;
            Ok(Sample::new(x, Target::Values(y)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((net, batch))
}

pub fn teacher_diagnostics(cfg: &TeacherConfig, seed: u64) -> Result<TeacherDiagnostics> {
    let (net, batch) = teacher_at_optimum(cfg, seed)?;
    let loss = LossKind::MeanSquaredError;
    let gradient_norm = norm(&net.flat_gradient(&batch, loss)?);
    let bundle = exact_hessian(&net, &batch, loss)?;
    let mut rng = substream(seed, "teacher-direction");
    let raw: Vec<f64> = (0..net.parameter_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let unit_norm = norm(&raw);
    let mut norms = Vec::new();
    let mut relative_errors = Vec::new();
    for i in 0..=cfg.halvings {
        let size = cfg.initial_norm / 2f64.powi(i as i32);
        let delta: Vec<f64> = raw.iter().map(|v| v * size / unit_norm).collect();
        let check = second_order_check_with(&net, &batch, loss, &bundle, &delta)?;
        norms.push(size);
        relative_errors.push(check.relative_error);
    }
    let convergence_ok = relative_errors.windows(2).all(|w| w[1] <= 0.5 * w[0] * 1.05);
    let importance = profile_for_task(&net, &batch, batch.len())?.normalized;
    let block_lambda_max: Vec<f64> = bundle.block_eigen.iter().map(|e| e.max()).collect();
    Ok(TeacherDiagnostics {
        parameter_count: net.parameter_count(),
        gradient_norm,
        off_block_ratio: block_diagonal_measure(&bundle),
        importance_curvature_correlation: pearson(&importance, &block_lambda_max),
        norms,
        relative_errors,
        convergence_ok,
        importance,
        block_lambda_max,
    })
}

/// Runs the whole theory suite without touching the filesystem.
pub fn run_theory(cfg: &TheoryConfig) -> Result<TheoryReport> {
    cfg.validate()?;
    let mut trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| hierarchy_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    if cfg.include_tied_trial {
        trials.push(tied_trial(cfg, cfg.trials)?);
    }
    let rayleigh = rayleigh_trials(cfg)?;
    let teacher = cfg.teacher.as_ref().map(|t| teacher_diagnostics(t, cfg.seed)).transpose()?;

    let constructed: Vec<&TheoryTrial> = trials.iter().filter(|t| t.kind == TrialKind::Constructed).collect();
    let ordered = trials.iter().filter(|t| t.report.ordering_satisfied).count();
    let valid = trials.iter().filter(|t| t.report.bounds_valid).count();
    let strict = constructed.iter().filter(|t| t.report.status == HierarchyStatus::Strict).count();
    let non_strict = trials.iter().filter(|t| t.report.status == HierarchyStatus::NonStrict).count();
    let mut checks = vec![
        CheckLine {
            name: "hierarchy ordering".into(),
            passed: ordered == trials.len(),
            detail: format!("{ordered}/{} trials with adaptive <= fixed <= full", trials.len()),
        },
        CheckLine {
            name: "hierarchy strict".into(),
            passed: strict == constructed.len(),
            detail: format!(
                "{strict}/{} constructed trials strict; {non_strict} trials non-strict",
                constructed.len()
            ),
        },
        CheckLine {
            name: "bounds valid".into(),
            passed: valid == trials.len(),
            detail: format!("{valid}/{} trials with realized <= bound", trials.len()),
        },
        CheckLine {
            name: "rayleigh".into(),
            passed: rayleigh.violations == 0 && rayleigh.top_eigenvector_gap <= 1e-8,
            detail: format!(
                "{} violations in {} trials; top-eigenvector gap {:.3e}",
                rayleigh.violations, rayleigh.trials, rayleigh.top_eigenvector_gap
            ),
        },
    ];
    if let Some(t) = &teacher {
        checks.push(CheckLine {
            name: "second-order convergence".into(),
            passed: t.convergence_ok,
            detail: format!("relative errors {:?}", t.relative_errors),
        });
    }
    Ok(TheoryReport {
        config: cfg.clone(),
        trials,
        rayleigh,
        teacher,
        checks,
    })
}

pub const BOUNDS_HEADER: [&str; 11] = [
    "trial",
    "kind",
    "status",
    "bound_full",
    "bound_fixed",
    "bound_adaptive",
    "realized_full",
    "realized_fixed",
    "realized_adaptive",
    "bounds_valid",
    "rejected",
];

pub fn write_bounds_csv(trials: &[TheoryTrial], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUNDS_HEADER)?;
    for t in trials {
        let r = &t.report;
        let status = match r.status {
            HierarchyStatus::Strict => "strict",
            HierarchyStatus::NonStrict => "non-strict",
            HierarchyStatus::Violated => "violated",
        };
        let kind = match t.kind {
            TrialKind::Constructed => "constructed",
            TrialKind::Tied => "tied",
        };
        w.write_record([
            t.trial.to_string(),
            kind.to_string(),
            status.to_string(),
            r.bound_full.to_string(),
            r.bound_fixed.to_string(),
            r.bound_adaptive.to_string(),
            r.realized_full.to_string(),
            r.realized_fixed.to_string(),
            r.realized_adaptive.to_string(),
            r.bounds_valid.to_string(),
            t.rejected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SpectrumOptions {
    pub prune: Option<Keep>,
    /// Layers to prune; all when `None`.
    pub layers: Option<Vec<usize>>,
    /// Task stream (JSON) used to evaluate pruning and capture inputs.
    pub tasks: Option<PathBuf>,
    pub mp_threshold: bool,
    pub mp_scale: f64,
    pub noise_sigma: Option<f64>,
    /// Layer whose per-direction input norms are written.
    pub directions: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumOutcome {
    pub output_dir: PathBuf,
    pub layers: usize,
    pub noise: Option<Vec<NoiseClassification>>,
    pub prune: Option<PruneReport>,
}

/// Writes `spectrum_stats.csv` and, on request, pruning and direction reports.
pub fn cmd_spectrum(checkpoint: &Path, flags: &SpectrumOptions, opts: &OutputOptions) -> Result<SpectrumOutcome> {
    let net = Network::load_checkpoint(checkpoint)?;
    let tasks = match &flags.tasks {
        Some(p) => {
            let spec: TaskStreamSpec = read_json(p)?;
            Some(generate(&spec)?)
        }
        None => None,
    };
    if flags.prune.is_some() && tasks.is_none() {
        return Err(Error::InvalidArgument("--prune needs --tasks to evaluate the pruned network".into()));
    }
    if flags.directions.is_some() && tasks.is_none() {
        return Err(Error::InvalidArgument("--directions needs --tasks to capture layer inputs".into()));
    }
    let dir = opts.resolve(None, "asvd-spectrum")?;

    let stats = spectrum_stats(&net)?;
    let noise = if flags.mp_threshold {
        let scale = if flags.mp_scale > 0.0 { flags.mp_scale } else { 1.0 };
        Some(
            net.layers()
                .iter()
                .enumerate()
                .map(|(l, layer)| classify_noise(l, &layer.weight, scale, flags.noise_sigma))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    write_atomic(&dir.join("spectrum_stats.csv"), |w| write_stats_csv(&stats, noise.as_deref(), w))?;

    let prune = match (flags.prune, &tasks) {
        (Some(keep), Some(tasks)) => {
            let spec = PruneSpec {
                layers: flags.layers.clone().map_or(LayerSelector::All, LayerSelector::Layers),
                keep,
            };
            let (pruned, report) = prune_low_rank(&net, &spec, tasks)?;
            pruned.save_checkpoint(&dir.join("pruned.ckpt"))?;
            write_json(&dir.join("prune_report.json"), &report)?;
            write_atomic(&dir.join("prune.csv"), |w| write_prune_csv(&report, w))?;
            Some(report)
        }
        _ => None,
    };
    if let (Some(layer), Some(tasks)) = (flags.directions, &tasks) {
        let batch: Vec<Sample> = tasks.iter().flat_map(|t| t.test.iter().cloned()).collect();
        let norms = direction_activation_norms(&net, layer, &batch)?;
        write_atomic(&dir.join(format!("directions_layer{layer}.csv")), |w| write_direction_csv(&norms, w))?;
    }
    Ok(SpectrumOutcome {
        output_dir: dir,
        layers: stats.len(),
        noise,
        prune,
    })
}

/// Mean AA and BWT of one trainer across merged summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainerAggregate {
    pub trainer: String,
    pub runs: usize,
    pub mean_aa: f64,
    pub mean_bwt: f64,
}

/// Merges `summary.csv` files (or directories holding one) into `output`,
/// prefixing each row with its source.
pub fn cmd_report(inputs: &[PathBuf], output: &Path, overwrite: bool) -> Result<Vec<TrainerAggregate>> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one input".into()));
    }
    if output.exists() && !overwrite {
        return Err(Error::OutputExists(output.to_path_buf()));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for input in inputs {
        let path = if input.is_dir() { input.join("summary.csv") } else { input.clone() };
        let mut r = csv::Reader::from_path(&path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != SUMMARY_HEADER {
            return Err(Error::Format(format!("{} is not a run summary (header {header:?})", path.display())));
        }
        for rec in r.records() {
            let mut row = vec![input.display().to_string()];
            row.extend(rec?.iter().map(str::to_string));
            rows.push(row);
        }
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_atomic(output, |w| {
        let mut csv_w = csv::Writer::from_writer(w);
        let mut header = vec!["source"];
        header.extend(SUMMARY_HEADER);
        csv_w.write_record(&header)?;
        for row in &rows {
            csv_w.write_record(row)?;
        }
        csv_w.flush()?;
        Ok(())
    })?;

    let mut groups: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for row in &rows {
        let parse = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad number {:?} in summary row", row[i])))
        };
        let g = groups.entry(row[2].clone()).or_default();
        g.0 += 1;
        g.1 += parse(4)?;
        g.2 += parse(5)?;
    }
    Ok(groups
        .into_iter()
        .map(|(trainer, (n, aa, bwt))| TrainerAggregate {
            trainer,
            runs: n,
            mean_aa: aa / n as f64,
            mean_bwt: bwt / n as f64,
        })
        .collect())
}

/// An identity-activation network whose weights are iid noise; used to
/// exercise the noise classifier.
pub fn noise_network(shapes: &[(usize, usize)], sigma: f64, seed: u64) -> Result<Network> {
    let mut rng = substream(seed, "noise");
    let layers = shapes
        .iter()
        .map(|&(r, c)| crate::network::Layer {
            weight: Matrix::from_fn(r, c, |_, _| sigma * normal(&mut rng)),
            activation: Activation::Identity,
        })
        .collect();
    Network::from_layers(layers)
}
