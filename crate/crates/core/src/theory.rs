//! Numerical checks of the quadratic forgetting model.
//!
//! Around a minimum `θ*` of an old task's loss, a parameter change `Δθ`
//! raises that loss by roughly `½ ΔθᵀHΔθ`. Under a per-layer (block
//! diagonal) Hessian, freezing the top Hessian directions of each block caps
//! that increase at `½ λ c` where `‖Δθ‖² = c` and `λ` is the largest
//! eigenvalue left reachable. This module builds exact Hessians of small
//! networks, evaluates the three strategy bounds (full fine-tuning, a
//! uniform retained fraction, importance-weighted fractions) and measures
//! the worst case that is actually reachable under each constraint.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::normalize;
use crate::linalg::{dot, norm, svd, symmetric_eigendecomposition, Matrix, SymmetricEigen};
use crate::network::{LossKind, Network, Sample};
use crate::subspace::{allocate_rank, retained_count, RetentionConfig};

/// Step of the central difference applied to the analytic gradient.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Gradient norm below which parameters count as converged.
pub const OPTIMUM_GRADIENT_TOLERANCE: f64 = 1e-6;
/// Slack allowed when comparing a realized worst case with its bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Exact Hessian of a task loss with its per-layer diagonal blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBundle {
    pub h: Matrix,
    /// Parameter count of each block, in parameter-vector order.
    pub block_sizes: Vec<usize>,
    pub blocks: Vec<Matrix>,
    /// Eigendecomposition of each block, eigenvalues descending.
    pub block_eigen: Vec<SymmetricEigen>,
    /// Eigendecomposition of the whole Hessian.
    pub eigen: SymmetricEigen,
    pub theta_star: Vec<f64>,
}

impl HessianBundle {
    pub fn from_parts(h: Matrix, block_sizes: Vec<usize>, theta_star: Vec<f64>) -> Result<Self> {
        let p: usize = block_sizes.iter().sum();
        if h.shape() != (p, p) || theta_star.len() != p {
            return Err(Error::dims(
                "HessianBundle",
                format!("{p}x{p} Hessian and {p} parameters"),
                format!("{}x{} and {}", h.rows(), h.cols(), theta_star.len()),
            ));
        }
        let eigen = symmetric_eigendecomposition(&h)?;
        let mut blocks = Vec::with_capacity(block_sizes.len());
        let mut offset = 0;
        for &n in &block_sizes {
            blocks.push(Matrix::from_fn(n, n, |r, c| h[(offset + r, offset + c)]));
            offset += n;
        }
        let block_eigen = blocks
            .iter()
            .map(symmetric_eigendecomposition)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            h,
            block_sizes,
            blocks,
            block_eigen,
            eigen,
            theta_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigen.max()
    }

    /// Eigenvalues of every block, descending.
    pub fn block_eigenvalues(&self) -> Vec<Vec<f64>> {
        self.block_eigen.iter().map(|e| e.eigenvalues.clone()).collect()
    }

    fn block_offsets(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect()
    }
}

/// `½ xᵀ H x`
pub fn quadratic_form(h: &Matrix, x: &[f64]) -> Result<f64> {
    Ok(0.5 * dot(x, &h.matvec(x)?))
}

/// Hessian by central differences of a gradient function, symmetrized.
pub fn hessian_from_gradient(
    mut gradient: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    theta: &[f64],
    step: f64,
) -> Result<Matrix> {
    let p = theta.len();
    let mut h = Matrix::zeros(p, p);
    let mut probe = theta.to_vec();
    for j in 0..p {
        probe[j] = theta[j] + step;
        let plus = gradient(&probe)?;
        probe[j] = theta[j] - step;
        let minus = gradient(&probe)?;
        probe[j] = theta[j];
        if plus.len() != p || minus.len() != p {
            return Err(Error::dims("gradient length", p, plus.len()));
        }
        for i in 0..p {
            h[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(h.symmetrized())
}

/// Exact Hessian of the mean batch loss at the network's current weights,
/// blocked by layer.
pub fn exact_hessian(net: &Network, batch: &[Sample], loss: LossKind) -> Result<HessianBundle> {
    if let Some(l) = net.layers().iter().find(|l| !l.activation.is_smooth()) {
        return Err(Error::NonSmoothActivation(l.activation.name()));
    }
    let theta = net.parameter_vector();
    let mut probe = net.clone();
    let h = hessian_from_gradient(
        |t| {
            probe.set_parameters(t)?;
            probe.flat_gradient(batch, loss)
        },
        &theta,
        HESSIAN_STEP,
    )?;
    HessianBundle::from_parts(h, net.layer_parameter_counts(), theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderCheck {
    /// `L(θ* + Δθ) − L(θ*)`
    pub exact: f64,
    /// `½ ΔθᵀHΔθ`
    pub predicted: f64,
    pub relative_error: f64,
}

fn relative_gap(exact: f64, predicted: f64) -> f64 {
    let gap = (exact - predicted).abs();
    if gap == 0.0 {
        0.0
    } else {
        gap / exact.abs().max(predicted.abs())
    }
}

/// Rejects parameters that are not at a stationary point of the batch loss.
pub fn ensure_optimum(net: &Network, batch: &[Sample], loss: LossKind) -> Result<()> {
    let grad_norm = norm(&net.flat_gradient(batch, loss)?);
    if grad_norm > OPTIMUM_GRADIENT_TOLERANCE {
        return Err(Error::NotAtOptimum {
            grad_norm,
            tolerance: OPTIMUM_GRADIENT_TOLERANCE,
        });
    }
    Ok(())
}

/// Compares the true loss increase with the quadratic prediction, using a
/// Hessian already computed at the network's weights.
pub fn second_order_check_with(
    net: &Network,
    batch: &[Sample],
    loss: LossKind,
    bundle: &HessianBundle,
    delta_theta: &[f64],
) -> Result<SecondOrderCheck> {
    let theta = net.parameter_vector();
    if delta_theta.len() != theta.len() {
        return Err(Error::dims("delta_theta", theta.len(), delta_theta.len()));
    }
    let moved: Vec<f64> = theta.iter().zip(delta_theta).map(|(a, b)| a + b).collect();
    let exact = net.with_parameters(&moved)?.loss(batch, loss)? - net.loss(batch, loss)?;
    let predicted = quadratic_form(&bundle.h, delta_theta)?;
    Ok(SecondOrderCheck {
        exact,
        predicted,
        relative_error: relative_gap(exact, predicted),
    })
}

/// `ΔL ≈ ½ΔθᵀHΔθ` at a converged network.
pub fn second_order_forgetting_check(
    net_at_optimum: &Network,
    batch: &[Sample],
    loss: LossKind,
    delta_theta: &[f64],
) -> Result<SecondOrderCheck> {
    ensure_optimum(net_at_optimum, batch, loss)?;
    let bundle = exact_hessian(net_at_optimum, batch, loss)?;
    second_order_check_with(net_at_optimum, batch, loss, &bundle, delta_theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighCheck {
    /// `ΔθᵀHΔθ`
    pub quadratic_form: f64,
    /// `λ_max(H) ‖Δθ‖²`
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn rayleigh_bound_check(bundle: &HessianBundle, delta_theta: &[f64]) -> Result<RayleighCheck> {
    rayleigh_check(&bundle.h, bundle.lambda_max(), delta_theta)
}

/// `ΔθᵀHΔθ ≤ λ_max ‖Δθ‖²` for a given `λ_max`.
pub fn rayleigh_check(h: &Matrix, lambda_max: f64, delta_theta: &[f64]) -> Result<RayleighCheck> {
    let q = 2.0 * quadratic_form(h, delta_theta)?;
    let bound = lambda_max * dot(delta_theta, delta_theta);
    Ok(RayleighCheck {
        quadratic_form: q,
        bound,
        slack: bound - q,
        holds: q <= bound + BOUND_SLACK,
    })
}

/// `‖off-block part‖_F / ‖block-diagonal part‖_F`.
pub fn block_diagonal_measure(bundle: &HessianBundle) -> f64 {
    let offsets = bundle.block_offsets();
    let block_of = |i: usize| offsets.iter().rposition(|&o| o <= i).unwrap_or(0);
    let (mut on, mut off) = (0.0, 0.0);
    let p = bundle.dim();
    for r in 0..p {
        for c in 0..p {
            let v = bundle.h[(r, c)] * bundle.h[(r, c)];
            if block_of(r) == block_of(c) {
                on += v;
            } else {
                off += v;
            }
        }
    }
    if on == 0.0 {
        return if off == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (off / on).sqrt()
}

/// `max ½ΔθᵀHΔθ` over `Δθ` in `span(basis)` with `‖Δθ‖² = c`.
pub fn worst_case_in_basis(h: &Matrix, basis: &Matrix, c: f64) -> Result<f64> {
    if basis.cols() == 0 {
        return Ok(0.0);
    }
    let restricted = basis.transpose().matmul(h).matmul(basis).symmetrized();
    Ok(0.5 * c * symmetric_eigendecomposition(&restricted)?.max())
}

/// Worst-case forgetting under an update budget `‖Δθ‖² = c` restricted to
/// the range of the orthogonal projector `projector`.
pub fn equal_norm_worst_case(h: &Matrix, projector: &Matrix, c: f64) -> Result<f64> {
    if projector.shape() != h.shape() {
        return Err(Error::dims(
            "projector",
            format!("{:?}", h.shape()),
            format!("{:?}", projector.shape()),
        ));
    }
    let e = symmetric_eigendecomposition(projector)?;
    let keep: Vec<Vec<f64>> = e
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(i, _)| e.eigenvectors.column(i))
        .collect();
    let basis = Matrix::from_columns(h.rows(), &keep)?;
    worst_case_in_basis(h, &basis, c)
}

/// Strictness of the bound ordering in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyStatus {
    Strict,
    /// Ordering holds with at least one tie (e.g. coinciding allocations).
    NonStrict,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c: f64,
    pub bound_full: f64,
    pub bound_fixed: f64,
    pub bound_adaptive: f64,
    /// Worst case reachable under each constraint, `½ c λ_max(restricted H)`.
    pub realized_full: f64,
    pub realized_fixed: f64,
    pub realized_adaptive: f64,
    pub fixed_fraction: f64,
    pub adaptive_fractions: Vec<f64>,
    /// Frozen eigen-directions per block under each strategy.
    pub fixed_cuts: Vec<usize>,
    pub adaptive_cuts: Vec<usize>,
    pub ordering_satisfied: bool,
    pub status: HierarchyStatus,
    /// Every realized value is within its bound (+ [`BOUND_SLACK`]).
    pub bounds_valid: bool,
}

/// Largest eigenvalue left reachable once each block freezes its top `cuts[l]`
/// eigen-directions; fully frozen blocks contribute nothing.
fn exposed_max(eigs: &[Vec<f64>], cuts: &[usize]) -> f64 {
    let best = eigs
        .iter()
        .zip(cuts)
        .filter_map(|(e, &cut)| e.get(cut).copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        0.0
    } else {
        best
    }
}

/// Basis of the updates allowed when each block freezes its top `cuts[l]`
/// Hessian eigenvectors.
fn allowed_basis(bundle: &HessianBundle, cuts: &[usize]) -> Result<Matrix> {
    let p = bundle.dim();
    let mut columns = Vec::new();
    for ((offset, eig), &cut) in bundle.block_offsets().into_iter().zip(&bundle.block_eigen).zip(cuts) {
        for i in cut..eig.eigenvalues.len() {
            let mut col = vec![0.0; p];
            for (r, v) in eig.eigenvectors.column(i).into_iter().enumerate() {
                col[offset + r] = v;
            }
            columns.push(col);
        }
    }
    Matrix::from_columns(p, &columns)
}

/// Evaluates the three forgetting bounds and their realized worst cases.
///
/// `importance` holds normalized layer importances (mean one). A block of
/// `n` parameters retained at fraction `f` freezes `round(f·n)` of its
/// eigen-directions.
pub fn bound_hierarchy_experiment(
    bundle: &HessianBundle,
    importance: &[f64],
    retention: &RetentionConfig,
    fixed_fraction: f64,
    c: f64,
) -> Result<BoundReport> {
    retention.validate()?;
    if importance.len() != bundle.block_sizes.len() {
        return Err(Error::dims("importance per block", bundle.block_sizes.len(), importance.len()));
    }
    if !(0.0..=1.0).contains(&fixed_fraction) || !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need fixed_fraction in [0, 1] and c >= 0, got {fixed_fraction} and {c}"
        )));
    }
    let eigs = bundle.block_eigenvalues();
    let adaptive_fractions: Vec<f64> = importance.iter().map(|&i| allocate_rank(i, retention)).collect();
    let fixed_cuts: Vec<usize> = bundle.block_sizes.iter().map(|&n| retained_count(fixed_fraction, n)).collect();
    let adaptive_cuts: Vec<usize> = bundle
        .block_sizes
        .iter()
        .zip(&adaptive_fractions)
        .map(|(&n, &f)| retained_count(f, n))
        .collect();

    let bound_full = 0.5 * c * bundle.lambda_max();
    let bound_fixed = 0.5 * c * exposed_max(&eigs, &fixed_cuts);
    let bound_adaptive = 0.5 * c * exposed_max(&eigs, &adaptive_cuts);

    let realized_full = worst_case_in_basis(&bundle.h, &Matrix::identity(bundle.dim()), c)?;
    let realized_fixed = worst_case_in_basis(&bundle.h, &allowed_basis(bundle, &fixed_cuts)?, c)?;
    let realized_adaptive = worst_case_in_basis(&bundle.h, &allowed_basis(bundle, &adaptive_cuts)?, c)?;

    let ordering_satisfied = bound_adaptive <= bound_fixed && bound_fixed <= bound_full;
    let status = if !ordering_satisfied {
        HierarchyStatus::Violated
    } else if bound_adaptive < bound_fixed && bound_fixed < bound_full {
        HierarchyStatus::Strict
    } else {
        HierarchyStatus::NonStrict
    };
    let bounds_valid = realized_full <= bound_full + BOUND_SLACK
        && realized_fixed <= bound_fixed + BOUND_SLACK
        && realized_adaptive <= bound_adaptive + BOUND_SLACK;

    Ok(BoundReport {
        c,
        bound_full,
        bound_fixed,
        bound_adaptive,
        realized_full,
        realized_fixed,
        realized_adaptive,
        fixed_fraction,
        adaptive_fractions,
        fixed_cuts,
        adaptive_cuts,
        ordering_satisfied,
        status,
        bounds_valid,
    })
}

/// Random symmetric matrix with the given eigenvalues.
pub fn matrix_with_spectrum(eigenvalues: &[f64], rng: &mut impl Rng) -> Result<Matrix> {
    let n = eigenvalues.len();
    let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let f = svd(&g)?;
    let q = f.u.matmul(&f.v.transpose());
    let scaled = Matrix::from_fn(n, n, |r, c| q[(r, c)] * eigenvalues[c]);
    Ok(scaled.matmul(&q.transpose()).symmetrized())
}

/// Block-diagonal Hessian whose blocks have the given spectra.
pub fn block_diagonal_hessian(spectra: &[Vec<f64>], rng: &mut impl Rng) -> Result<HessianBundle> {
    let sizes: Vec<usize> = spectra.iter().map(Vec::len).collect();
    let p: usize = sizes.iter().sum();
    let mut h = Matrix::zeros(p, p);
    let mut offset = 0;
    for spectrum in spectra {
        let block = matrix_with_spectrum(spectrum, rng)?;
        for r in 0..block.rows() {
            for c in 0..block.cols() {
                h[(offset + r, offset + c)] = block[(r, c)];
            }
        }
        offset += spectrum.len();
    }
    HessianBundle::from_parts(h, sizes, vec![0.0; p])
}

/// A synthetic hierarchy trial: block curvature and layer importance
/// correlate because importance is proportional to each block's top
/// eigenvalue.
#[derive(Debug, Clone)]
pub struct ConstructedInstance {
    pub bundle: HessianBundle,
    /// Normalized (mean one).
    pub importance: Vec<f64>,
    /// Whether the frozen-eigenvalue premise holds: the block exposing the
    /// largest eigenvalue under the fixed fraction is cut deeper by the
    /// adaptive rule, and every other block either is cut deeper too or
    /// exposes a smaller eigenvalue.
    pub premise_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceShape {
    pub layers: usize,
    pub min_block: usize,
    pub max_block: usize,
    /// Top eigenvalues are drawn log-uniformly from `[1, max_scale]`.
    pub max_scale: f64,
    /// Successive eigenvalues within a block shrink by a factor drawn from this range.
    pub decay: (f64, f64),
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            layers: 3,
            min_block: 4,
            max_block: 8,
            max_scale: 100.0,
            decay: (0.2, 0.6),
        }
    }
}

pub fn construct_instance(
    shape: &InstanceShape,
    retention: &RetentionConfig,
    fixed_fraction: f64,
    rng: &mut impl Rng,
) -> Result<ConstructedInstance> {
    if shape.layers == 0 || shape.min_block == 0 || shape.min_block > shape.max_block {
        return Err(Error::InvalidConfig("instance shape needs layers >= 1 and 1 <= min_block <= max_block".into()));
    }
    let spectra: Vec<Vec<f64>> = (0..shape.layers)
        .map(|_| {
            let n = rng.random_range(shape.min_block..=shape.max_block);
            let top = shape.max_scale.powf(rng.random::<f64>());
            let mut v = Vec::with_capacity(n);
            let mut current = top;
            for _ in 0..n {
                v.push(current);
                current *= rng.random_range(shape.decay.0..shape.decay.1);
            }
            v
        })
        .collect();
    let tops: Vec<f64> = spectra.iter().map(|s| s[0]).collect();
    let importance = normalize(&tops)?.normalized;
    let bundle = block_diagonal_hessian(&spectra, rng)?;
    let premise_holds = importance_premise(&bundle, &importance, retention, fixed_fraction);
    Ok(ConstructedInstance {
        bundle,
        importance,
        premise_holds,
    })
}

/// The condition under which the adaptive bound is strictly below the
/// fixed one.
pub fn importance_premise(
    bundle: &HessianBundle,
    importance: &[f64],
    retention: &RetentionConfig,
    fixed_fraction: f64,
) -> bool {
    let eigs = bundle.block_eigenvalues();
    let exposed = |l: usize, cut: usize| eigs[l].get(cut).copied();
    let fixed_cuts: Vec<usize> = bundle.block_sizes.iter().map(|&n| retained_count(fixed_fraction, n)).collect();
    let adaptive_cuts: Vec<usize> = bundle
        .block_sizes
        .iter()
        .zip(importance)
        .map(|(&n, &i)| retained_count(allocate_rank(i, retention), n))
        .collect();
    let critical = (0..eigs.len())
        .filter_map(|l| exposed(l, fixed_cuts[l]).map(|v| (l, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let Some((star, lambda_star)) = critical else {
        return false;
    };
    if adaptive_cuts[star] <= fixed_cuts[star] {
        return false;
    }
    (0..eigs.len()).all(|l| match exposed(l, adaptive_cuts[l]) {
        None => true,
        Some(v) => v < lambda_star,
    })
}
