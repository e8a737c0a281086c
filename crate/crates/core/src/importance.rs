//! Layer importance from input/output activation similarity.
//!
//! A layer whose linear output points the same way as its input mostly
//! carries information forward, so it scores close to 1. Scores are then
//! rescaled to average one across layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cosine_similarity;
use crate::network::{Network, Sample};

/// Default number of samples used to profile a task.
pub const DEFAULT_SAMPLE_COUNT: usize = 128;

/// Inputs `X_i` and linear outputs `Y_i = W X_i` of one layer over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub layer_index: usize,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Set when the raw scores could not be normalized (non-positive sum
    /// with some nonzero score) and the uniform profile was used instead.
    pub fallback: Option<String>,
    /// Non-square layers, whose score is undefined. They get `raw = 1` and
    /// `normalized = 1`; the remaining layers are normalized among themselves.
    #[serde(default)]
    pub undefined_layers: Vec<usize>,
}

impl ImportanceProfile {
    pub fn uniform(layers: usize) -> Self {
        Self {
            raw: vec![1.0; layers],
            normalized: vec![1.0; layers],
            fallback: None,
            undefined_layers: Vec::new(),
        }
    }
}

/// Mean cosine similarity between paired inputs and outputs, or `None` for
/// a non-square layer where the cosine is undefined.
pub fn layer_importance(batch: &ActivationBatch) -> Result<Option<f64>> {
    if batch.inputs.is_empty() || batch.inputs.len() != batch.outputs.len() {
        return Err(Error::InvalidArgument(format!(
            "activation batch for layer {} needs N >= 1 paired samples, got {} inputs / {} outputs",
            batch.layer_index,
            batch.inputs.len(),
            batch.outputs.len()
        )));
    }
    if batch.inputs[0].len() != batch.outputs[0].len() {
        return Ok(None);
    }
    let mut total = 0.0;
    for (x, y) in batch.inputs.iter().zip(&batch.outputs) {
        total += cosine_similarity(x, y)?;
    }
    Ok(Some(total / batch.inputs.len() as f64))
}

/// Rescales `raw` to mean one: `raw[l] · L / Σ raw`.
pub fn normalize(raw: &[f64]) -> Result<ImportanceProfile> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("importance needs at least one layer".into()));
    }
    let sum: f64 = raw.iter().sum();
    let l = raw.len() as f64;
    if sum > 0.0 {
        return Ok(ImportanceProfile {
            raw: raw.to_vec(),
            normalized: raw.iter().map(|r| r * l / sum).collect(),
            fallback: None,
            undefined_layers: Vec::new(),
        });
    }
    let fallback = if raw.iter().all(|&r| r == 0.0) {
        None
    } else {
        Some(format!(
            "importance scores sum to {sum:.6} (<= 0); using the uniform profile"
        ))
    };
    Ok(ImportanceProfile {
        raw: raw.to_vec(),
        normalized: vec![1.0; raw.len()],
        fallback,
        undefined_layers: Vec::new(),
    })
}

/// Like [`normalize`], but `None` scores (non-square layers) are pinned at
/// the mean: they get normalized importance 1 and the defined scores are
/// rescaled to mean one among themselves.
pub fn normalize_partial(raw: &[Option<f64>]) -> Result<ImportanceProfile> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("importance needs at least one layer".into()));
    }
    let defined: Vec<f64> = raw.iter().flatten().copied().collect();
    let undefined_layers: Vec<usize> = (0..raw.len()).filter(|&l| raw[l].is_none()).collect();
    let inner = if defined.is_empty() {
        ImportanceProfile::uniform(0)
    } else {
        normalize(&defined)?
    };
    let mut scores = inner.raw.into_iter().zip(inner.normalized);
    let (raw_out, normalized) = raw
        .iter()
        .map(|r| match r {
            Some(_) => scores.next().expect("one entry per defined score"),
            None => (1.0, 1.0),
        })
        .unzip();
    Ok(ImportanceProfile {
        raw: raw_out,
        normalized,
        fallback: inner.fallback,
        undefined_layers,
    })
}

/// Collects per-layer activation batches from the first `sample_count` samples.
pub fn capture_activations(
    net: &Network,
    samples: &[Sample],
    sample_count: usize,
) -> Result<Vec<ActivationBatch>> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("importance sample count must be positive".into()));
    }
    if samples.len() < sample_count {
        return Err(Error::InvalidArgument(format!(
            "importance needs {sample_count} samples, data source has {}",
            samples.len()
        )));
    }
    let mut batches: Vec<ActivationBatch> = (0..net.layer_count())
        .map(|layer_index| ActivationBatch {
            layer_index,
            inputs: Vec::with_capacity(sample_count),
            outputs: Vec::with_capacity(sample_count),
        })
        .collect();
    for s in &samples[..sample_count] {
        let pass = net.forward(&s.x)?;
        for (batch, cap) in batches.iter_mut().zip(pass.captures) {
            batch.inputs.push(cap.input);
            batch.outputs.push(cap.output);
        }
    }
    Ok(batches)
}

/// Importance of every layer on `samples`; see [`normalize_partial`] for
/// non-square layers.
pub fn profile_for_task(net: &Network, samples: &[Sample], sample_count: usize) -> Result<ImportanceProfile> {
    let raw = capture_activations(net, samples, sample_count)?
        .iter()
        .map(layer_importance)
        .collect::<Result<Vec<_>>>()?;
    normalize_partial(&raw)
}
