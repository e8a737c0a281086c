//! Sequential training over a task stream with SVD subspace protection,
//! plus the baselines and ablations it is compared against.
//!
//! For the adaptive trainer, every task boundary does the following:
//!
//! 1. profile layer importance on the previous task's data (uniform for the
//!    first task),
//! 2. take the SVD of each current weight and freeze its top
//!    `allocate_rank(importance)` fraction of singular directions,
//! 3. train with mini-batch SGD where every applied step is projected off
//!    the frozen subspace, then
//! 4. evaluate every task seen so far.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{self, ImportanceProfile, DEFAULT_SAMPLE_COUNT};
use crate::linalg::{frobenius_inner, svd, Matrix};
use crate::metrics::{average_accuracy, backward_transfer, suite_delta, AccuracyMatrix, RunReport};
use crate::network::{Activation, LayerSpec, Network, Sample};
use crate::seeding::{subseed, substream};
use crate::subspace::{allocate_rank, interference, partition, project_gradient, RetentionConfig, SubspacePartition};
use crate::tasks::{evaluate, evaluate_samples, generate, TaskData, TaskStreamSpec};

/// Largest interference a projected update may carry.
pub const INTERFERENCE_TOLERANCE: f64 = 1e-8;

/// In release-style runs the interference check is sampled every this many steps.
pub const INVARIANT_SAMPLE_PERIOD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    /// Importance-weighted retention per layer with projected updates.
    AdaptiveSvd,
    /// The same retained fraction at every layer.
    FixedRank,
    /// Freeze the top `(i−1)/T` fraction of directions for task `i`.
    FixedBudget,
    /// Plain sequential fine-tuning.
    SeqFull,
    /// Freeze the top singular triplets but let the rest move without projection.
    NoProjectionAblation,
    /// Train on the union of all tasks seen so far.
    JointMultitask,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::AdaptiveSvd => "adaptive_svd",
            TrainerKind::FixedRank => "fixed_rank",
            TrainerKind::FixedBudget => "fixed_budget",
            TrainerKind::SeqFull => "seq_full",
            TrainerKind::NoProjectionAblation => "no_projection_ablation",
            TrainerKind::JointMultitask => "joint_multitask",
        }
    }

    /// Trainers whose applied updates must have zero interference.
    pub fn is_projected(self) -> bool {
        matches!(
            self,
            TrainerKind::AdaptiveSvd | TrainerKind::FixedRank | TrainerKind::FixedBudget
        )
    }

    fn uses_importance(self) -> bool {
        matches!(self, TrainerKind::AdaptiveSvd | TrainerKind::NoProjectionAblation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs_per_task: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.05,
            momentum: 0.0,
            epochs_per_task: 5,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("optimizer.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("optimizer.momentum must lie in [0, 1)".into()));
        }
        if self.epochs_per_task == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "optimizer.epochs_per_task and optimizer.batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceSplit {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportanceConfig {
    pub samples: usize,
    /// Which split of the previous task feeds the profile.
    pub split: ImportanceSplit,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLE_COUNT,
            split: ImportanceSplit::Train,
        }
    }
}

/// Everything `train_continual` needs besides the network and the tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub trainer: TrainerKind,
    pub optimizer: OptimizerConfig,
    pub retention: RetentionConfig,
    /// Retained fraction used by `fixed_rank`.
    pub fixed_fraction: f64,
    pub importance: ImportanceConfig,
    /// Check interference after every step instead of every
    /// [`INVARIANT_SAMPLE_PERIOD`] steps.
    pub debug_invariants: bool,
    /// Measure `⟨P_U G_prev P_V, ΔW⟩_F` for every applied step.
    pub track_first_order: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            trainer: TrainerKind::AdaptiveSvd,
            optimizer: OptimizerConfig::default(),
            retention: RetentionConfig::default(),
            fixed_fraction: 0.5,
            importance: ImportanceConfig::default(),
            debug_invariants: false,
            track_first_order: true,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.retention.validate()?;
        if !(0.0..=1.0).contains(&self.fixed_fraction) {
            return Err(Error::InvalidConfig("fixed_fraction must lie in [0, 1]".into()));
        }
        if self.importance.samples == 0 {
            return Err(Error::InvalidConfig("importance.samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAllocation {
    pub layer: usize,
    pub fraction: f64,
    pub r_count: usize,
    /// Number of singular directions, `min(d_O, d_I)`.
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `‖U_hᵀ ΔW V_h‖_F` over checked steps.
    pub interference_max: f64,
    /// Largest `|⟨P_U G_prev P_V, ΔW⟩_F|` over applied steps after the first task.
    pub first_order_max: f64,
    /// Per task; `None` where the trainer does not use importance.
    pub importance_profiles: Vec<Option<ImportanceProfile>>,
    /// Per task, per layer; empty rows for unprojected trainers.
    pub rank_allocations: Vec<Vec<RankAllocation>>,
    /// Mean training loss over the last epoch of each task.
    pub final_train_loss: Vec<f64>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ContinualOutcome {
    pub network: Network,
    pub accuracy: AccuracyMatrix,
    pub diagnostics: Diagnostics,
}

/// `weight − project_gradient(raw_step)`: applies an already scaled step
/// with its high-subspace component removed.
pub fn apply_projected_step(weight: &Matrix, raw_step: &Matrix, p: &SubspacePartition) -> Result<Matrix> {
    if weight.shape() != raw_step.shape() {
        return Err(Error::dims(
            "apply_projected_step",
            format!("{:?}", weight.shape()),
            format!("{:?}", raw_step.shape()),
        ));
    }
    let delta = project_gradient(raw_step, p)?;
    Ok(weight - &delta)
}

/// How updates are constrained during one task.
enum Constraint {
    Free,
    Projected(Vec<SubspacePartition>),
    /// The high triplets are restored after every unprojected step.
    FrozenTriplets(Vec<SubspacePartition>),
}

pub fn train_continual(
    mut net: Network,
    tasks: &[TaskData],
    settings: &TrainSettings,
    batch_seed: u64,
) -> Result<ContinualOutcome> {
    settings.validate()?;
    let first = tasks
        .first()
        .ok_or_else(|| Error::InvalidArgument("task stream is empty".into()))?;
    for task in tasks {
        if task.input_dim() != net.input_dim() || task.kind.output_dim() != net.output_dim() {
            return Err(Error::dims(
                "network vs task",
                format!("{} -> {}", task.input_dim(), task.kind.output_dim()),
                format!("{} -> {}", net.input_dim(), net.output_dim()),
            ));
        }
        if task.kind.loss() != first.kind.loss() {
            return Err(Error::InvalidArgument("all tasks in a stream must share a loss".into()));
        }
    }
    let loss_kind = first.kind.loss();
    let opt = &settings.optimizer;
    let mut rng = substream(batch_seed, "batching");
    let mut accuracy = AccuracyMatrix::new();
    let mut diag = Diagnostics::default();
    let task_count = tasks.len();

    for (t, task) in tasks.iter().enumerate() {
        let profile = if settings.trainer.uses_importance() {
            let profile = match t {
                0 => ImportanceProfile::uniform(net.layer_count()),
                _ => {
                    let prev = &tasks[t - 1];
                    let source = match settings.importance.split {
                        ImportanceSplit::Train => &prev.train,
                        ImportanceSplit::Test => &prev.test,
                    };
                    let n = settings.importance.samples.min(source.len());
                    importance::profile_for_task(&net, source, n)?
                }
            };
            if let Some(w) = &profile.fallback {
                diag.warnings.push(format!("task {t}: {w}"));
            }
            Some(profile)
        } else {
            None
        };

        let fractions: Option<Vec<f64>> = match settings.trainer {
            TrainerKind::AdaptiveSvd | TrainerKind::NoProjectionAblation => Some(
                profile
                    .as_ref()
                    .expect("importance computed above")
                    .normalized
                    .iter()
                    .map(|&i| allocate_rank(i, &settings.retention))
                    .collect(),
            ),
            TrainerKind::FixedRank => Some(vec![settings.fixed_fraction; net.layer_count()]),
            TrainerKind::FixedBudget => Some(vec![t as f64 / task_count as f64; net.layer_count()]),
            TrainerKind::SeqFull | TrainerKind::JointMultitask => None,
        };
        diag.importance_profiles.push(profile);

        let partitions = match &fractions {
            Some(fr) => Some(
                net.weights()
                    .zip(fr)
                    .map(|(w, &f)| partition(&svd(w)?, f))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        diag.rank_allocations.push(
            partitions
                .iter()
                .flatten()
                .enumerate()
                .map(|(layer, p)| RankAllocation {
                    layer,
                    fraction: p.retained_fraction,
                    r_count: p.r_count,
                    k: p.u_high.cols() + p.u_low.cols(),
                })
                .collect(),
        );
        let constraint = match (settings.trainer, partitions) {
            (TrainerKind::NoProjectionAblation, Some(p)) => Constraint::FrozenTriplets(p),
            (_, Some(p)) => Constraint::Projected(p),
            (_, None) => Constraint::Free,
        };

        // Directions in which the previous task's loss would rise to first order.
        let guarded: Option<Vec<Matrix>> = match (&constraint, t) {
            (Constraint::Projected(parts), t) if t > 0 && settings.track_first_order => {
                let g_prev = net.backward(&tasks[t - 1].train, loss_kind)?;
                Some(
                    g_prev
                        .iter()
                        .zip(parts)
                        .map(|(g, p)| p.high_component(g))
                        .collect::<Result<_>>()?,
                )
            }
            _ => None,
        };

        let pool: Vec<&Sample> = match settings.trainer {
            TrainerKind::JointMultitask => tasks[..=t].iter().flat_map(|d| d.train.iter()).collect(),
            _ => task.train.iter().collect(),
        };
        if pool.is_empty() {
            return Err(Error::InvalidArgument(format!("task {t} has no training samples")));
        }

        let mut velocity: Vec<Matrix> = net.weights().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        let mut order: Vec<usize> = (0..pool.len()).collect();
        let mut last_epoch_loss = 0.0;
        for epoch in 0..opt.epochs_per_task {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(opt.batch_size) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| pool[i].clone()).collect();
                let (loss, grads) = net.loss_and_gradient(&batch, loss_kind)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss {loss} at task {t}, epoch {epoch}, step {}",
                        diag.steps
                    )));
                }
                epoch_loss += loss * batch.len() as f64;
                let check_now = settings.debug_invariants || diag.steps % INVARIANT_SAMPLE_PERIOD == 0;
                for (l, grad) in grads.iter().enumerate() {
                    let raw = match opt.kind {
                        OptimizerKind::Sgd => grad.scaled(opt.learning_rate),
                        OptimizerKind::SgdMomentum => {
                            let v = &mut velocity[l];
                            *v = v.scaled(opt.momentum);
                            v.add_scaled(grad, 1.0);
                            v.scaled(opt.learning_rate)
                        }
                    };
                    let weight = &net.layers()[l].weight;
                    let updated = match &constraint {
                        Constraint::Free => weight - &raw,
                        Constraint::Projected(parts) => {
                            let p = &parts[l];
                            let delta = project_gradient(&raw, p)?;
                            if check_now {
                                let leak = interference(&delta, p)?;
                                diag.interference_max = diag.interference_max.max(leak);
                                if leak > INTERFERENCE_TOLERANCE {
                                    return Err(Error::InvariantViolation(format!(
                                        "interference {leak:e} at task {t}, layer {l}, step {}",
                                        diag.steps
                                    )));
                                }
                            }
                            if let Some(guarded) = &guarded {
                                let inner = frobenius_inner(&guarded[l], &delta)?.abs();
                                diag.first_order_max = diag.first_order_max.max(inner);
                            }
                            weight - &delta
                        }
                        Constraint::FrozenTriplets(parts) => {
                            let p = &parts[l];
                            let moved = weight - &raw;
                            let f = svd(&moved)?;
                            &p.high_weight() + &f.partial_sum(p.r_count, f.rank())
                        }
                    };
                    net.set_weight(l, updated)?;
                }
                diag.steps += 1;
            }
            last_epoch_loss = epoch_loss / pool.len() as f64;
        }
        diag.final_train_loss.push(last_epoch_loss);

        let row = tasks[..=t].iter().map(|d| evaluate(&net, d)).collect::<Result<Vec<_>>>()?;
        accuracy.push_row(row)?;
    }

    Ok(ContinualOutcome {
        network: net,
        accuracy,
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Widths of the hidden layers; input and output widths come from the tasks.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Init standard deviation is `init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16, 16],
            activation: Activation::Tanh,
            init_scale: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn layer_specs(&self, input_dim: usize, output_dim: usize) -> Vec<LayerSpec> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(output_dim);
        let last = dims.len() - 2;
        dims.windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                input_dim: w[0],
                output_dim: w[1],
                activation: if i == last { Activation::Identity } else { self.activation },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilitySuiteConfig {
    /// Number of held-out tasks never trained on.
    pub task_count: usize,
}

/// One fully specified continual-learning run, minus its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tasks: TaskStreamSpec,
    pub network: NetworkConfig,
    pub training: TrainSettings,
    /// Training order as a permutation of task indices; identity when absent.
    pub task_order: Option<Vec<usize>>,
    pub ability_suite: Option<AbilitySuiteConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tasks: TaskStreamSpec::default(),
            network: NetworkConfig::default(),
            training: TrainSettings::default(),
            task_order: None,
            ability_suite: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.tasks.validate()?;
        self.training.validate()?;
        if let Some(order) = &self.task_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..self.tasks.task_count).collect::<Vec<_>>() {
                return Err(Error::InvalidConfig(format!(
                    "task_order must be a permutation of 0..{}, got {order:?}",
                    self.tasks.task_count
                )));
            }
        }
        if !(self.network.init_scale > 0.0 && self.network.init_scale.is_finite()) {
            return Err(Error::InvalidConfig("network.init_scale must be positive".into()));
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::InvalidConfig("network.hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn with_trainer(&self, trainer: TrainerKind) -> Self {
        let mut cfg = self.clone();
        cfg.training.trainer = trainer;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub network: Network,
}

/// The task stream a run with this seed trains on.
pub fn data_spec(cfg: &RunConfig, seed: u64) -> TaskStreamSpec {
    cfg.tasks.with_seed(subseed(seed, "data"))
}

/// Generates the data, initializes the network and trains, all from named
/// sub-streams of `seed`.
pub fn execute(cfg: &RunConfig, seed: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = data_spec(cfg, seed);
    let mut tasks = generate(&spec)?;
    if let Some(order) = &cfg.task_order {
        let mut slots: Vec<Option<TaskData>> = tasks.into_iter().map(Some).collect();
        tasks = order.iter().map(|&i| slots[i].take().expect("validated permutation")).collect();
    }
    let kind = spec.kind();
    let specs = cfg.network.layer_specs(spec.dimension, kind.output_dim());
    let mut init_rng: ChaCha8Rng = substream(seed, "init");
    let net = Network::random(&specs, cfg.network.init_scale, &mut init_rng)?;
    let parameter_count_before = net.parameter_count();

    let suite = match &cfg.ability_suite {
        Some(s) if s.task_count > 0 => Some(generate(&TaskStreamSpec {
            task_count: s.task_count,
            seed: subseed(seed, "suite"),
            ..cfg.tasks.clone()
        })?),
        _ => None,
    };
    let suite_scores = |net: &Network| -> Result<Option<Vec<f64>>> {
        suite
            .as_ref()
            .map(|s| s.iter().map(|t| evaluate_samples(net, &t.test, t.kind)).collect())
            .transpose()
    };
    let ability_before = suite_scores(&net)?;

    let outcome = train_continual(net, &tasks, &cfg.training, subseed(seed, "batching"))?;
    let ability_after = suite_scores(&outcome.network)?;
    let ability_delta = match (&ability_before, &ability_after) {
        (Some(b), Some(a)) => Some(suite_delta(b, a)?),
        _ => None,
    };

    let t = outcome.accuracy.task_count();
    let report = RunReport {
        config: cfg.clone(),
        seed,
        aa: average_accuracy(&outcome.accuracy)?,
        bwt: backward_transfer(&outcome.accuracy, t)?,
        bwt_series: (1..=t)
            .map(|i| backward_transfer(&outcome.accuracy, i))
            .collect::<Result<_>>()?,
        accuracy_matrix: outcome.accuracy,
        ability_before,
        ability_after,
        ability_delta,
        interference_max: outcome.diagnostics.interference_max,
        first_order_max: outcome.diagnostics.first_order_max,
        importance_profiles: outcome.diagnostics.importance_profiles,
        rank_allocations: outcome.diagnostics.rank_allocations,
        final_train_loss: outcome.diagnostics.final_train_loss,
        steps: outcome.diagnostics.steps,
        parameter_count_before,
        parameter_count_after: outcome.network.parameter_count(),
        warnings: outcome.diagnostics.warnings,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome {
        report,
        network: outcome.network,
    })
}

/// The adaptive trainer under the base retention and under both ratios halved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationComparison {
    pub default: RunReport,
    pub halved: RunReport,
}

pub fn run_ablation_halved_retention(base: &RunConfig, seed: u64) -> Result<AblationComparison> {
    let default_cfg = base.with_trainer(TrainerKind::AdaptiveSvd);
    let mut halved_cfg = default_cfg.clone();
    halved_cfg.training.retention = default_cfg.training.retention.halved();
    Ok(AblationComparison {
        default: execute(&default_cfg, seed)?.report,
        halved: execute(&halved_cfg, seed)?.report,
    })
}
