//! Deterministic synthetic task sequences.
//!
//! Every family shares one input space across tasks so that learning a new
//! task moves weights the old tasks depend on:
//!
//! * `rotated_gaussians`: Gaussian class clusters whose means are rotated by
//!   `2π·t/T` (in every coordinate plane `(2i, 2i+1)`) for task `t`.
//! * `permuted_features`: the same clusters, with a seeded permutation of
//!   the input coordinates per task (task 0 unpermuted).
//! * `subspace_regression`: linear targets `y = W_t x + noise` where the rows
//!   of each `W_t` live in a different block of a random orthonormal basis.
//!
//! Train and test samples of every task come from separate RNG streams.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::network::{argmax, sample_loss, LossKind, Network, Sample, Target};
use crate::seeding::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    RotatedGaussians,
    PermutedFeatures,
    SubspaceRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskStreamSpec {
    pub family: TaskFamily,
    pub task_count: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    pub dimension: usize,
    /// Standard deviation of the isotropic sample noise.
    pub noise: f64,
    /// Distance of each class mean from the origin (classification families).
    pub separation: f64,
    pub class_count: usize,
    /// Output dimension of `subspace_regression`.
    pub target_dim: usize,
    /// Master seed of the data; experiment runs override it per seed.
    pub seed: u64,
}

impl Default for TaskStreamSpec {
    fn default() -> Self {
        Self {
            family: TaskFamily::RotatedGaussians,
            task_count: 5,
            train_per_task: 1000,
            test_per_task: 500,
            dimension: 16,
            noise: 0.5,
            separation: 3.0,
            class_count: 4,
            target_dim: 4,
            seed: 0,
        }
    }
}

impl TaskStreamSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("task_count", self.task_count),
            ("train_per_task", self.train_per_task),
            ("test_per_task", self.test_per_task),
            ("dimension", self.dimension),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("tasks.{key} must be positive")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig("tasks.noise must be finite and >= 0".into()));
        }
        match self.family {
            TaskFamily::SubspaceRegression if self.target_dim == 0 => {
                Err(Error::InvalidConfig("tasks.target_dim must be positive".into()))
            }
            TaskFamily::RotatedGaussians | TaskFamily::PermutedFeatures if self.class_count < 2 => {
                Err(Error::InvalidConfig("tasks.class_count must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.family {
            TaskFamily::SubspaceRegression => TaskKind::Regression {
                target_dim: self.target_dim,
            },
            _ => TaskKind::Classification {
                classes: self.class_count,
            },
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression { target_dim: usize },
}

impl TaskKind {
    pub fn loss(self) -> LossKind {
        match self {
            TaskKind::Classification { .. } => LossKind::SoftmaxCrossEntropy,
            TaskKind::Regression { .. } => LossKind::MeanSquaredError,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression { target_dim } => target_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskData {
    pub task_id: usize,
    pub kind: TaskKind,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl TaskData {
    pub fn input_dim(&self) -> usize {
        self.train.first().or(self.test.first()).map_or(0, |s| s.x.len())
    }
}

pub fn generate(spec: &TaskStreamSpec) -> Result<Vec<TaskData>> {
    spec.validate()?;
    match spec.family {
        TaskFamily::RotatedGaussians => {
            let means = class_means(spec);
            Ok((0..spec.task_count)
                .map(|t| {
                    let angle = 2.0 * std::f64::consts::PI * t as f64 / spec.task_count as f64;
                    let rotated: Vec<Vec<f64>> = means.iter().map(|m| rotate_planes(m, angle)).collect();
                    cluster_task(spec, t, &rotated, None)
                })
                .collect())
        }
        TaskFamily::PermutedFeatures => {
            let means = class_means(spec);
            let mut rng = substream(spec.seed, "permutations");
            Ok((0..spec.task_count)
                .map(|t| {
                    let mut perm: Vec<usize> = (0..spec.dimension).collect();
                    if t > 0 {
                        perm.shuffle(&mut rng);
                    }
                    cluster_task(spec, t, &means, Some(&perm))
                })
                .collect())
        }
        TaskFamily::SubspaceRegression => subspace_regression(spec),
    }
}

fn sample_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn class_means(spec: &TaskStreamSpec) -> Vec<Vec<f64>> {
    let mut rng = substream(spec.seed, "class-means");
    (0..spec.class_count)
        .map(|_| {
            let v = gaussian_vec(spec.dimension, &mut rng);
            let n = crate::linalg::norm(&v).max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x * spec.separation / n).collect()
        })
        .collect()
}

/// Rotates every coordinate pair `(2i, 2i+1)` by `angle`.
fn rotate_planes(v: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = v.to_vec();
    for i in (0..v.len().saturating_sub(1)).step_by(2) {
        out[i] = c * v[i] - s * v[i + 1];
        out[i + 1] = s * v[i] + c * v[i + 1];
    }
    out
}

fn cluster_split(
    spec: &TaskStreamSpec,
    means: &[Vec<f64>],
    perm: Option<&[usize]>,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<Sample> {
    (0..count)
        .map(|i| {
            let label = i % means.len();
            let raw: Vec<f64> = means[label]
                .iter()
                .map(|m| m + spec.noise * sample_normal(rng))
                .collect();
            let x = match perm {
                Some(p) => p.iter().map(|&j| raw[j]).collect(),
                None => raw,
            };
            Sample::new(x, Target::Class(label))
        })
        .collect()
}

fn cluster_task(spec: &TaskStreamSpec, t: usize, means: &[Vec<f64>], perm: Option<&[usize]>) -> TaskData {
    let mut train_rng = substream(spec.seed, &format!("task{t}/train"));
    let mut test_rng = substream(spec.seed, &format!("task{t}/test"));
    TaskData {
        task_id: t,
        kind: spec.kind(),
        train: cluster_split(spec, means, perm, spec.train_per_task, &mut train_rng),
        test: cluster_split(spec, means, perm, spec.test_per_task, &mut test_rng),
    }
}

fn subspace_regression(spec: &TaskStreamSpec) -> Result<Vec<TaskData>> {
    let d = spec.dimension;
    let mut rng = substream(spec.seed, "subspaces");
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let f = svd(&g)?;
    let basis = f.u.matmul(&f.v.transpose());
    let block = (d / spec.task_count).max(1);
    let mut tasks = Vec::with_capacity(spec.task_count);
    for t in 0..spec.task_count {
        let cols: Vec<Vec<f64>> = (0..block).map(|j| basis.column((t * block + j) % d)).collect();
        let b = Matrix::from_columns(d, &cols)?;
        let a = Matrix::from_fn(spec.target_dim, block, |_, _| StandardNormal.sample(&mut rng));
        let teacher = a.matmul(&b.transpose());
        let split = |name: &str, count: usize| -> Result<Vec<Sample>> {
            let mut r = substream(spec.seed, &format!("task{t}/{name}"));
            (0..count)
                .map(|_| {
                    let x = gaussian_vec(d, &mut r);
                    let mut y = teacher.matvec(&x)?;
                    for v in &mut y {
                        *v += spec.noise * sample_normal(&mut r);
                    }
                    Ok(Sample::new(x, Target::Values(y)))
                })
                .collect()
        };
        tasks.push(TaskData {
            task_id: t,
            kind: spec.kind(),
            train: split("train", spec.train_per_task)?,
            test: split("test", spec.test_per_task)?,
        });
    }
    Ok(tasks)
}

/// Test accuracy (classification) or mean squared error (regression).
pub fn evaluate(net: &Network, task: &TaskData) -> Result<f64> {
    evaluate_samples(net, &task.test, task.kind)
}

pub fn evaluate_samples(net: &Network, samples: &[Sample], kind: TaskKind) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on zero samples".into()));
    }
    if net.output_dim() != kind.output_dim() {
        return Err(Error::dims("network output", kind.output_dim(), net.output_dim()));
    }
    let mut total = 0.0;
    for s in samples {
        let pred = net.predict(&s.x)?;
        total += match (kind, &s.y) {
            (TaskKind::Classification { .. }, Target::Class(c)) => f64::from(u8::from(argmax(&pred) == *c)),
            (TaskKind::Classification { .. }, Target::Values(v)) => {
                f64::from(u8::from(argmax(&pred) == argmax(v)))
            }
            (TaskKind::Regression { .. }, y) => sample_loss(&pred, y, LossKind::MeanSquaredError)?,
        };
    }
    Ok(total / samples.len() as f64)
}

/// Writes every sample as a CSV row: task id, split, label (or target
/// columns), then features.
pub fn write_csv(tasks: &[TaskData], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = tasks.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["task_id".to_string(), "split".to_string()];
    match first.kind {
        TaskKind::Classification { .. } => header.push("label".into()),
        TaskKind::Regression { target_dim } => header.extend((0..target_dim).map(|i| format!("y{i}"))),
    }
    header.extend((0..first.input_dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for task in tasks {
        for (split, samples) in [("train", &task.train), ("test", &task.test)] {
            for s in samples.iter() {
                let mut row = vec![task.task_id.to_string(), split.to_string()];
                match &s.y {
                    Target::Class(c) => row.push(c.to_string()),
                    Target::Values(v) => row.extend(v.iter().map(|x| x.to_string())),
                }
                row.extend(s.x.iter().map(|x| x.to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
