//! Singular-value diagnostics of trained weights.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::capture_activations;
use crate::linalg::{svd, Matrix};
use crate::network::{Network, Sample};
use crate::tasks::{evaluate, TaskData};

/// Fraction of singular values above the noise edge at which a layer is
/// flagged as looking full rank.
pub const FULL_RANK_NOTE_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStats {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

/// Descriptive statistics of a list of singular values; the median of an
/// even count averages the two middle values.
pub fn describe(layer: usize, rows: usize, cols: usize, sigma: &[f64]) -> SpectrumStats {
    let mut sorted = sigma.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (min, max, mean, median) = if n == 0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        (sorted[0], sorted[n - 1], sorted.iter().sum::<f64>() / n as f64, median)
    };
    SpectrumStats {
        layer,
        rows,
        cols,
        min,
        max,
        mean,
        median,
    }
}

pub fn spectrum_stats(net: &Network) -> Result<Vec<SpectrumStats>> {
    net.layers()
        .par_iter()
        .enumerate()
        .map(|(l, layer)| {
            let (r, c) = layer.weight.shape();
            Ok(describe(l, r, c, &svd(&layer.weight)?.sigma))
        })
        .collect()
}

/// Smallest singular value of an `m × n` iid matrix with entry scale
/// `noise_sigma`, in the large-dimension limit: `σ |√m − √n|`.
pub fn marchenko_pastur_threshold(m: usize, n: usize, noise_sigma: f64) -> Result<f64> {
    if m == 0 || n == 0 || !(noise_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold needs m, n >= 1 and sigma > 0, got {m}, {n}, {noise_sigma}"
        )));
    }
    Ok(noise_sigma * ((m as f64).sqrt() - (n as f64).sqrt()).abs())
}

/// `median(σᵢ) / √max(m, n)`
pub fn estimate_noise_sigma(sigma: &[f64], m: usize, n: usize) -> f64 {
    describe(0, m, n, sigma).median / (m.max(n) as f64).sqrt()
}

pub const NOISE_ESTIMATOR: &str = "median(singular values) / sqrt(max(rows, cols))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseClassification {
    pub layer: usize,
    pub noise_sigma: f64,
    pub estimator: String,
    pub scale: f64,
    /// `scale · σ |√m − √n|`
    pub threshold: f64,
    pub above: usize,
    pub below: usize,
    pub fraction_above: f64,
    pub note: Option<String>,
}

/// Splits a weight's singular values at the (scaled) noise edge. Values
/// below it are classified as noise.
pub fn classify_noise(
    layer: usize,
    weight: &Matrix,
    scale: f64,
    noise_sigma: Option<f64>,
) -> Result<NoiseClassification> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold scale must be positive, got {scale}")));
    }
    let (m, n) = weight.shape();
    let sigma = svd(weight)?.sigma;
    let (noise_sigma, estimator) = match noise_sigma {
        Some(s) => (s, "user supplied".to_string()),
        None => (estimate_noise_sigma(&sigma, m, n), NOISE_ESTIMATOR.to_string()),
    };
    let threshold = scale * marchenko_pastur_threshold(m, n, noise_sigma)?;
    let above = sigma.iter().filter(|&&s| s >= threshold).count();
    let fraction_above = above as f64 / sigma.len().max(1) as f64;
    let note = (fraction_above >= FULL_RANK_NOTE_FRACTION).then(|| {
        format!(
            "{:.1}% of singular values exceed the noise edge; the iid noise model classifies this layer as full rank",
            100.0 * fraction_above
        )
    });
    Ok(NoiseClassification {
        layer,
        noise_sigma,
        estimator,
        scale,
        threshold,
        above,
        below: sigma.len() - above,
        fraction_above,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    All,
    Layers(Vec<usize>),
}

impl LayerSelector {
    pub fn includes(&self, layer: usize) -> bool {
        match self {
            LayerSelector::All => true,
            LayerSelector::Layers(ls) => ls.contains(&layer),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    /// Keeps `max(1, round(f · k))` of the `k` singular directions.
    Fraction(f64),
    Count(usize),
}

impl Keep {
    pub fn count(self, k: usize) -> Result<usize> {
        match self {
            Keep::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((f * k as f64).round_ties_even() as usize).clamp(1, k.max(1))),
            Keep::Fraction(f) => Err(Error::InvalidArgument(format!(
                "retained fraction must be in (0, 1], got {f}"
            ))),
            Keep::Count(0) => Err(Error::InvalidArgument("retained count must be positive".into())),
            Keep::Count(c) => Ok(c.min(k)),
        }
    }
}

/// Parses `fraction=0.5`, `count=3` or a bare fraction.
impl FromStr for Keep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse prune spec {s:?}; expected fraction=F or count=K"));
        let keep = match s.split_once('=') {
            Some(("fraction", v)) => Keep::Fraction(v.parse().map_err(|_| bad())?),
            Some(("count", v)) => Keep::Count(v.parse().map_err(|_| bad())?),
            Some(_) => return Err(bad()),
            None => Keep::Fraction(s.parse().map_err(|_| bad())?),
        };
        keep.count(1)?;
        Ok(keep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub layers: LayerSelector,
    pub keep: Keep,
}

/// Replaces the selected layers by their top-k SVD reconstruction.
pub fn prune_network(net: &Network, spec: &PruneSpec) -> Result<Network> {
    let mut out = net.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        if !spec.layers.includes(l) {
            continue;
        }
        let f = svd(&layer.weight)?;
        let k = spec.keep.count(f.rank())?;
        out.set_weight(l, f.truncated(k))?;
    }
    if let LayerSelector::Layers(ls) = &spec.layers {
        if let Some(&bad) = ls.iter().find(|&&l| l >= net.layer_count()) {
            return Err(Error::InvalidArgument(format!(
                "layer {bad} out of range for a {}-layer network",
                net.layer_count()
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub spec: PruneSpec,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// `after − before` per task.
    pub deltas: Vec<f64>,
    pub mean_before: f64,
    pub mean_after: f64,
    pub mean_delta: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Prunes and re-evaluates every task; `net` is left untouched.
pub fn prune_low_rank(net: &Network, spec: &PruneSpec, tasks: &[TaskData]) -> Result<(Network, PruneReport)> {
    let pruned = prune_network(net, spec)?;
    let before = tasks.iter().map(|t| evaluate(net, t)).collect::<Result<Vec<_>>>()?;
    let after = tasks.iter().map(|t| evaluate(&pruned, t)).collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let report = PruneReport {
        spec: spec.clone(),
        mean_before: mean(&before),
        mean_after: mean(&after),
        mean_delta: mean(&deltas),
        before,
        after,
        deltas,
    };
    Ok((pruned, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionNorm {
    pub index: usize,
    pub sigma: f64,
    /// Mean over inputs of `‖uᵢ vᵢᵀ x‖ = |vᵢᵀ x|`.
    pub mean_norm: f64,
}

/// Mean `|vᵢᵀ x|` per right singular vector of `weight`, by descending `σᵢ`.
pub fn direction_norms(weight: &Matrix, inputs: &[Vec<f64>]) -> Result<Vec<DirectionNorm>> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("direction norms need at least one input".into()));
    }
    let f = svd(weight)?;
    let projected = inputs
        .iter()
        .map(|x| f.v.transpose_matvec(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(f.sigma
        .iter()
        .enumerate()
        .map(|(i, &sigma)| DirectionNorm {
            index: i,
            sigma,
            mean_norm: projected.iter().map(|p| p[i].abs()).sum::<f64>() / inputs.len() as f64,
        })
        .collect())
}

/// Direction norms of one layer using its inputs captured from a forward pass.
pub fn direction_activation_norms(net: &Network, layer: usize, batch: &[Sample]) -> Result<Vec<DirectionNorm>> {
    if layer >= net.layer_count() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} out of range for a {}-layer network",
            net.layer_count()
        )));
    }
    let captured = capture_activations(net, batch, batch.len())?;
    direction_norms(&net.layer(layer).weight, &captured[layer].inputs)
}

pub fn write_stats_csv(stats: &[SpectrumStats], noise: Option<&[NoiseClassification]>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["layer", "rows", "cols", "min", "max", "mean", "median"];
    if noise.is_some() {
        header.extend(["noise_sigma", "threshold", "above", "below", "fraction_above", "note"]);
    }
    w.write_record(&header)?;
    for (i, s) in stats.iter().enumerate() {
        let mut rec = vec![
            s.layer.to_string(),
            s.rows.to_string(),
            s.cols.to_string(),
            s.min.to_string(),
            s.max.to_string(),
            s.mean.to_string(),
            s.median.to_string(),
        ];
        if let Some(n) = noise.and_then(|n| n.get(i)) {
            rec.extend([
                n.noise_sigma.to_string(),
                n.threshold.to_string(),
                n.above.to_string(),
                n.below.to_string(),
                n.fraction_above.to_string(),
                n.note.clone().unwrap_or_default(),
            ]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_direction_csv(norms: &[DirectionNorm], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["direction", "sigma", "mean_norm"])?;
    for d in norms {
        w.write_record([d.index.to_string(), d.sigma.to_string(), d.mean_norm.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prune_csv(report: &PruneReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "before", "after", "delta"])?;
    for (t, ((b, a), d)) in report.before.iter().zip(&report.after).zip(&report.deltas).enumerate() {
        w.write_record([t.to_string(), b.to_string(), a.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn single(weight: Matrix) -> Network {
        Network::from_layers(vec![Layer {
            weight,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn stats_examples() {
        let s = &spectrum_stats(&single(Matrix::identity(3))).unwrap()[0];
        assert_eq!((s.min, s.max, s.mean, s.median), (1.0, 1.0, 1.0, 1.0));
        let s = &spectrum_stats(&single(Matrix::diag(&[4.0, 2.0, 2.0, 0.0]))).unwrap()[0];
        assert!(s.min.abs() < 1e-12);
        assert!((s.max - 4.0).abs() < 1e-12 && (s.mean - 2.0).abs() < 1e-12 && (s.median - 2.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(marchenko_pastur_threshold(50, 50, 1.0).unwrap(), 0.0);
        assert!((marchenko_pastur_threshold(400, 100, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((marchenko_pastur_threshold(100, 400, 2.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(marchenko_pastur_threshold(0, 4, 1.0).is_err());
        assert!(marchenko_pastur_threshold(4, 4, 0.0).is_err());
    }

    #[test]
    fn gaussian_noise_sits_above_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Matrix::from_fn(400, 100, |_, _| StandardNormal.sample(&mut rng));
        let c = classify_noise(0, &w, 1.0, Some(1.0)).unwrap();
        assert!(c.fraction_above >= 0.95, "{}", c.fraction_above);
        assert!(c.note.is_some());
    }

    #[test]
    fn keep_counts() {
        assert_eq!(Keep::Fraction(1.0).count(7).unwrap(), 7);
        assert_eq!(Keep::Fraction(0.01).count(7).unwrap(), 1);
        assert_eq!(Keep::Fraction(0.5).count(5).unwrap(), 2);
        assert!(Keep::Fraction(0.0).count(5).is_err());
        assert!(Keep::Count(0).count(5).is_err());
        assert_eq!("count=3".parse::<Keep>().unwrap(), Keep::Count(3));
        assert_eq!("fraction=1.0".parse::<Keep>().unwrap(), Keep::Fraction(1.0));
        assert!("0".parse::<Keep>().is_err());
        assert!("rank=2".parse::<Keep>().is_err());
    }

    #[test]
    fn full_prune_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::from_fn(5, 4, |_, _| StandardNormal.sample(&mut rng));
        let net = single(w.clone());
        let spec = PruneSpec {
            layers: LayerSelector::All,
            keep: Keep::Fraction(1.0),
        };
        let pruned = prune_network(&net, &spec).unwrap();
        assert!((&pruned.layer(0).weight - &w).max_abs() < 1e-8);
        assert_eq!(net.layer(0).weight, w);
    }

    #[test]
    fn direction_norms_in_top_span() {
        let w = Matrix::diag(&[3.0, 2.0, 1.0]);
        let inputs = vec![vec![2.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]];
        let d = direction_norms(&w, &inputs).unwrap();
        assert!((d[0].mean_norm - 1.5).abs() < 1e-12);
        assert!(d[1].mean_norm.abs() < 1e-12 && d[2].mean_norm.abs() < 1e-12);
    }

    #[test]
    fn bad_layer_rejected() {
        let net = single(Matrix::identity(2));
        let spec = PruneSpec {
            layers: LayerSelector::Layers(vec![3]),
            keep: Keep::Count(1),
        };
        assert!(prune_network(&net, &spec).is_err());
    }
}
