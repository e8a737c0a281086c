//! Bias-free dense feed-forward network with exact backpropagation.
//!
//! Layer `l` computes `Y = W X` followed by an elementwise activation. The
//! parameter vector is the concatenation of each layer's weight in
//! row-major order, first layer first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative at pre-activation `z`; relu uses 0 at the kink.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Relu),
            other => Err(Error::Format(format!("unknown activation tag {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `output_dim × input_dim`
    pub weight: Matrix,
    pub activation: Activation,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            input_dim: self.weight.cols(),
            output_dim: self.weight.rows(),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

/// Supervision for one sample. Class labels are one-hot for both losses;
/// dense values are a probability vector under cross-entropy and a
/// regression target under squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

impl Target {
    pub fn dense(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Target::Class(c) if *c < dim => {
                let mut v = vec![0.0; dim];
                v[*c] = 1.0;
                Ok(v)
            }
            Target::Class(c) => Err(Error::dims("class target", format!("label < {dim}"), c)),
            Target::Values(v) if v.len() == dim => Ok(v.clone()),
            Target::Values(v) => Err(Error::dims("dense target", dim, v.len())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Target,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Target) -> Self {
        Self { x, y }
    }
}

/// Input `X` and linear output `Y = W X` of one layer for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCapture {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub prediction: Vec<f64>,
    pub captures: Vec<LayerCapture>,
}

/// Per-sample loss for an output vector.
pub fn sample_loss(prediction: &[f64], target: &Target, kind: LossKind) -> Result<f64> {
    let t = target.dense(prediction.len())?;
    Ok(match kind {
        LossKind::SoftmaxCrossEntropy => {
            let logp = log_softmax(prediction);
            -t.iter().zip(&logp).map(|(ti, lp)| if *ti == 0.0 { 0.0 } else { ti * lp }).sum::<f64>()
        }
        LossKind::MeanSquaredError => prediction.iter().zip(&t).map(|(p, ti)| (p - ti) * (p - ti)).sum(),
    })
}

/// `∂loss/∂prediction` for one sample.
fn loss_gradient(prediction: &[f64], target: &Target, kind: LossKind) -> Result<Vec<f64>> {
    let t = target.dense(prediction.len())?;
    Ok(match kind {
        LossKind::SoftmaxCrossEntropy => {
            let mass: f64 = t.iter().sum();
            let p: Vec<f64> = log_softmax(prediction).into_iter().map(f64::exp).collect();
            p.iter().zip(&t).map(|(pi, ti)| pi * mass - ti).collect()
        }
        LossKind::MeanSquaredError => prediction.iter().zip(&t).map(|(p, ti)| 2.0 * (p - ti)).collect(),
    })
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(Error::dims(
                    "adjacent layers",
                    pair[0].weight.rows(),
                    pair[1].weight.cols(),
                ));
            }
        }
        if let Some(i) = layers.iter().position(|l| !l.weight.is_finite()) {
            return Err(Error::NonFinite(format!("weights of layer {i}")));
        }
        Ok(Self { layers })
    }

    /// Gaussian init with standard deviation `scale / sqrt(fan_in)`.
    pub fn random(specs: &[LayerSpec], scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| {
                let normal = Normal::new(0.0, scale / (s.input_dim.max(1) as f64).sqrt())
                    .map_err(|e| Error::InvalidArgument(format!("init scale {scale}: {e}")))?;
                Ok(Layer {
                    weight: Matrix::from_fn(s.output_dim, s.input_dim, |_, _| normal.sample(rng)),
                    activation: s.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.weight)
    }

    /// Replaces one weight; the shape must not change.
    pub fn set_weight(&mut self, layer: usize, weight: Matrix) -> Result<()> {
        let current = &self.layers[layer].weight;
        if current.shape() != weight.shape() {
            return Err(Error::dims(
                "set_weight",
                format!("{:?}", current.shape()),
                format!("{:?}", weight.shape()),
            ));
        }
        if !weight.is_finite() {
            return Err(Error::NonFinite(format!("new weight for layer {layer}")));
        }
        self.layers[layer].weight = weight;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    pub fn layer_parameter_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weight.len()).collect()
    }

    /// `θ = [vec(W₁)ᵀ, vec(W₂)ᵀ, …]ᵀ` with row-major `vec`.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            theta.extend_from_slice(l.weight.as_slice());
        }
        theta
    }

    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::dims("parameter vector", self.parameter_count(), theta.len()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&theta[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn with_parameters(&self, theta: &[f64]) -> Result<Network> {
        let mut out = self.clone();
        out.set_parameters(theta)?;
        Ok(out)
    }

    /// Splits a flat vector into per-layer matrices with this network's shapes.
    pub fn unflatten(&self, theta: &[f64]) -> Result<Vec<Matrix>> {
        if theta.len() != self.parameter_count() {
            return Err(Error::dims("parameter vector", self.parameter_count(), theta.len()));
        }
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let (r, c) = l.weight.shape();
                let m = Matrix::new(r, c, theta[offset..offset + r * c].to_vec());
                offset += r * c;
                m
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("network input", self.input_dim(), x.len()));
        }
        let mut captures = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let y = layer.weight.matvec(&h)?;
            let next = y.iter().map(|&z| layer.activation.apply(z)).collect();
            captures.push(LayerCapture { input: h, output: y });
            h = next;
        }
        Ok(ForwardPass {
            prediction: h,
            captures,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("network input", self.input_dim(), x.len()));
        }
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.weight.matvec(&h)?;
            for v in &mut h {
                *v = layer.activation.apply(*v);
            }
        }
        Ok(h)
    }

    /// Mean loss over the batch.
    pub fn loss(&self, batch: &[Sample], kind: LossKind) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut total = 0.0;
        for s in batch {
            total += sample_loss(&self.predict(&s.x)?, &s.y, kind)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean batch loss and its exact gradient with respect to every weight.
    pub fn loss_and_gradient(&self, batch: &[Sample], kind: LossKind) -> Result<(f64, Vec<Matrix>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grads: Vec<Matrix> = self
            .layers
            .iter()
            .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
            .collect();
        let mut total = 0.0;
        for s in batch {
            let pass = self.forward(&s.x)?;
            total += sample_loss(&pass.prediction, &s.y, kind)?;
            let mut delta = loss_gradient(&pass.prediction, &s.y, kind)?;
            for (l, layer) in self.layers.iter().enumerate().rev() {
                let cap = &pass.captures[l];
                for (d, &z) in delta.iter_mut().zip(&cap.output) {
                    *d *= layer.activation.derivative(z);
                }
                let g = grads[l].as_mut_slice();
                let cols = cap.input.len();
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (gv, &x) in g[r * cols..(r + 1) * cols].iter_mut().zip(&cap.input) {
                        *gv += d * x;
                    }
                }
                if l > 0 {
                    delta = layer.weight.transpose_matvec(&delta)?;
                }
            }
        }
        let n = batch.len() as f64;
        for g in &mut grads {
            for v in g.as_mut_slice() {
                *v /= n;
            }
        }
        Ok((total / n, grads))
    }

    pub fn backward(&self, batch: &[Sample], kind: LossKind) -> Result<Vec<Matrix>> {
        Ok(self.loss_and_gradient(batch, kind)?.1)
    }

    /// Gradient flattened in parameter-vector order.
    pub fn flat_gradient(&self, batch: &[Sample], kind: LossKind) -> Result<Vec<f64>> {
        Ok(flatten(&self.backward(batch, kind)?))
    }

    /// Central finite-difference gradient of the mean batch loss.
    pub fn finite_difference_gradient(
        &self,
        batch: &[Sample],
        kind: LossKind,
        epsilon: f64,
    ) -> Result<Vec<Matrix>> {
        let theta = self.parameter_vector();
        let mut probe = self.clone();
        let mut err = None;
        let flat = central_difference(
            |t| {
                probe.set_parameters(t).and_then(|_| probe.loss(batch, kind)).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            },
            &theta,
            epsilon,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        self.unflatten(&flat)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Network> {
        Self::read_checkpoint(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.weight.rows() as u32).to_le_bytes())?;
            w.write_all(&(l.weight.cols() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.tag()])?;
            for v in l.weight.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Network> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"ASVD\"")));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
            )));
        }
        let count = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let mut tag = [0u8; 1];
            read_exact(r, &mut tag)?;
            let activation = Activation::from_tag(tag[0])?;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                read_exact(r, &mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            layers.push(Layer {
                weight: Matrix::new(rows, cols, data)?,
                activation,
            });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after last layer".into()));
        }
        Network::from_layers(layers)
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASVD";
pub const CHECKPOINT_VERSION: u32 = 1;

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn flatten(mats: &[Matrix]) -> Vec<f64> {
    mats.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
}

/// `(f(θ + εeᵢ) − f(θ − εeᵢ)) / 2ε` for every coordinate `i`.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + epsilon;
        let plus = f(&probe);
        probe[i] = theta[i] - epsilon;
        let minus = f(&probe);
        probe[i] = theta[i];
        out.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Squared Euclidean norm of a flattened parameter difference.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = squared_distance(a, b).sqrt();
    let scale = dot(a, a).sqrt().max(dot(b, b).sqrt()).max(floor);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(i: usize, o: usize, a: Activation) -> LayerSpec {
        LayerSpec {
            input_dim: i,
            output_dim: o,
            activation: a,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Network::from_layers(vec![Layer {
            weight: Matrix::identity(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = [0.3, -1.0, 2.5];
        let pass = net.forward(&x).unwrap();
        assert_eq!(pass.prediction, x.to_vec());
        assert_eq!(pass.captures[0].input, x.to_vec());
        assert_eq!(pass.captures[0].output, x.to_vec());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Network::from_layers(vec![
            Layer {
                weight: Matrix::zeros(4, 3),
                activation: Activation::Identity,
            },
            Layer {
                weight: Matrix::zeros(2, 4),
                activation: Activation::Identity,
            },
        ])
        .unwrap();
        assert_eq!(net.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = Network::from_layers(vec![
            Layer {
                weight: Matrix::zeros(4, 3),
                activation: Activation::Tanh,
            },
            Layer {
                weight: Matrix::zeros(2, 5),
                activation: Activation::Tanh,
            },
        ]);
        assert!(bad.is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::random(&[spec(3, 2, Activation::Tanh)], 1.0, &mut rng).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.set_parameters(&[0.0; 5]).is_err());
        assert!(net.clone().set_weight(0, Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn mse_gradient_closed_form_2x2() {
        // one identity layer: dL/dW = (2/N) (W X − T) Xᵀ
        let w = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let net = Network::from_layers(vec![Layer {
            weight: w.clone(),
            activation: Activation::Identity,
        }])
        .unwrap();
        let batch = vec![
            Sample::new(vec![1.0, 0.0], Target::Values(vec![0.0, 1.0])),
            Sample::new(vec![2.0, 1.0], Target::Values(vec![1.0, 1.0])),
        ];
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let t = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap();
        let expected = (&w.matmul(&x) - &t).matmul(&x.transpose()).scaled(2.0 / 2.0);
        let got = net.backward(&batch, LossKind::MeanSquaredError).unwrap();
        assert!((&got[0] - &expected).frobenius_norm() < 1e-14);
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let teacher = Network::random(
            &[spec(3, 4, Activation::Tanh), spec(4, 2, Activation::Identity)],
            1.0,
            &mut rng,
        )
        .unwrap();
        let batch: Vec<Sample> = (0..6)
            .map(|i| {
                let x = vec![i as f64 * 0.1, 1.0 - i as f64 * 0.3, 0.7];
                let y = teacher.predict(&x).unwrap();
                Sample::new(x, Target::Values(y))
            })
            .collect();
        let grads = teacher.backward(&batch, LossKind::MeanSquaredError).unwrap();
        assert!(grads.iter().all(|g| g.max_abs() < 1e-10));
    }

    #[test]
    fn central_difference_on_quadratic() {
        let theta = vec![0.5, -2.0, 3.25];
        let g = central_difference(|t| 0.5 * dot(t, t), &theta, 1e-4).unwrap();
        for (a, b) in g.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(central_difference(|_| 0.0, &theta, 1e-2).is_err());
    }

    #[test]
    fn constant_loss_has_zero_fd_gradient() {
        let net = Network::from_layers(vec![
            Layer {
                weight: Matrix::zeros(3, 2),
                activation: Activation::Tanh,
            },
            Layer {
                weight: Matrix::zeros(3, 3),
                activation: Activation::Identity,
            },
        ])
        .unwrap();
        let batch = vec![Sample::new(vec![1.0, -1.0], Target::Values(vec![1.0 / 3.0; 3]))];
        let fd = net
            .finite_difference_gradient(&batch, LossKind::SoftmaxCrossEntropy, 1e-5)
            .unwrap();
        assert!(fd.iter().all(|g| g.max_abs() < 1e-8));
    }

    #[test]
    fn flatten_order_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::random(
            &[spec(2, 2, Activation::Tanh), spec(2, 2, Activation::Tanh)],
            1.0,
            &mut rng,
        )
        .unwrap();
        let theta = net.parameter_vector();
        assert_eq!(theta.len(), 8);
        assert_eq!(&theta[..4], net.layer(0).weight.as_slice());
        assert_eq!(net.with_parameters(&theta).unwrap(), net);

        let other = Network::random(&net.specs(), 1.0, &mut rng).unwrap();
        let flat = squared_distance(&theta, &other.parameter_vector());
        let per_layer: f64 = net
            .weights()
            .zip(other.weights())
            .map(|(a, b)| (a - b).frobenius_norm().powi(2))
            .sum();
        assert!((flat - per_layer).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_of_confident_correct_prediction_is_small() {
        let l = sample_loss(&[50.0, 0.0, 0.0], &Target::Class(0), LossKind::SoftmaxCrossEntropy).unwrap();
        assert!(l >= 0.0 && l < 1e-20);
        assert!(sample_loss(&[0.0, 0.0], &Target::Class(2), LossKind::SoftmaxCrossEntropy).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_rejections() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::random(
            &[spec(3, 5, Activation::Relu), spec(5, 2, Activation::Identity)],
            1.0,
            &mut rng,
        )
        .unwrap();
        let bytes = net.to_checkpoint_bytes();
        assert_eq!(&bytes[..4], b"ASVD");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 9 + 8 * (15 + 10));
        let back = Network::read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, net);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Network::read_checkpoint(&mut bad_magic.as_slice()),
            Err(Error::Format(_))
        ));
        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert!(matches!(
            Network::read_checkpoint(&mut bad_version.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(Network::read_checkpoint(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Network::read_checkpoint(&mut trailing.as_slice()).is_err());
    }
}
