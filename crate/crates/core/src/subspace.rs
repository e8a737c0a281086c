//! High/low singular subspace split and the orthogonal gradient projection.
//!
//! A weight `W = U Σ Vᵀ` is split at `r_count` into the leading
//! (high) singular directions, which hold what earlier tasks rely on, and
//! the trailing (low) ones that stay free for the next task. Updates are
//! projected with `G ↦ G − U_h U_hᵀ G V_h V_hᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, Matrix, SvdFactorization};

/// Minimum/target retention ratios bounding the fraction of singular
/// directions kept frozen in each layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionConfig {
    pub mrr: f64,
    pub trr: f64,
}

impl Default for RetentionConfig {
    fn default() -> Self {
        Self { mrr: 0.1, trr: 0.8 }
    }
}

impl RetentionConfig {
    pub fn new(mrr: f64, trr: f64) -> Result<Self> {
        let cfg = Self { mrr, trr };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mrr)
            || !(0.0..=1.0).contains(&self.trr)
            || self.mrr > self.trr
        {
            return Err(Error::InvalidConfig(format!(
                "retention requires 0 <= mrr <= trr <= 1, got mrr={} trr={}",
                self.mrr, self.trr
            )));
        }
        Ok(())
    }

    /// Both ratios halved.
    pub fn halved(&self) -> Self {
        Self {
            mrr: self.mrr / 2.0,
            trr: self.trr / 2.0,
        }
    }
}

/// Fraction of singular directions to retain for a layer of the given
/// normalized importance: `mrr + importance·(trr − mrr)`, clamped to `[0, 1]`.
pub fn allocate_rank(importance: f64, config: &RetentionConfig) -> f64 {
    (config.mrr + importance * (config.trr - config.mrr)).clamp(0.0, 1.0)
}

/// Number of directions retained for `fraction` of `k`: round half to even.
pub fn retained_count(fraction: f64, k: usize) -> usize {
    ((fraction * k as f64).round_ties_even().max(0.0) as usize).min(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspacePartition {
    pub u_high: Matrix,
    pub v_high: Matrix,
    pub u_low: Matrix,
    pub v_low: Matrix,
    /// Leading singular values (the `r_count` retained ones).
    pub sigma_high: Vec<f64>,
    pub retained_fraction: f64,
    pub r_count: usize,
}

impl SubspacePartition {
    /// `(d_O, d_I)` of the partitioned weight.
    pub fn weight_shape(&self) -> (usize, usize) {
        (self.u_high.rows(), self.v_high.rows())
    }

    /// `U_hᵀ G V_h`, the `r × r` block of `G` inside the high subspace.
    pub fn high_block(&self, g: &Matrix) -> Matrix {
        self.u_high.transpose().matmul(g).matmul(&self.v_high)
    }

    /// `P_U G P_V = U_h U_hᵀ G V_h V_hᵀ`.
    pub fn high_component(&self, g: &Matrix) -> Result<Matrix> {
        self.check_shape(g, "high_component")?;
        if self.r_count == 0 {
            return Ok(Matrix::zeros(g.rows(), g.cols()));
        }
        Ok(self
            .u_high
            .matmul(&self.high_block(g))
            .matmul(&self.v_high.transpose()))
    }

    /// `U_h Σ_h V_hᵀ`, the retained part of the original weight.
    pub fn high_weight(&self) -> Matrix {
        let (rows, cols) = self.weight_shape();
        let scaled = Matrix::from_fn(rows, self.r_count, |r, c| {
            self.u_high[(r, c)] * self.sigma_high[c]
        });
        if self.r_count == 0 {
            return Matrix::zeros(rows, cols);
        }
        scaled.matmul(&self.v_high.transpose())
    }

    fn check_shape(&self, g: &Matrix, context: &'static str) -> Result<()> {
        if g.shape() != self.weight_shape() {
            return Err(Error::dims(
                context,
                format!("{:?}", self.weight_shape()),
                format!("{:?}", g.shape()),
            ));
        }
        Ok(())
    }
}

/// Splits `f` so its leading `round(fraction · k)` directions are high.
pub fn partition(f: &SvdFactorization, fraction: f64) -> Result<SubspacePartition> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "retained fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let k = f.sigma.len();
    let r = retained_count(fraction, k);
    Ok(SubspacePartition {
        u_high: f.u.column_block(0, r),
        v_high: f.v.column_block(0, r),
        u_low: f.u.column_block(r, k),
        v_low: f.v.column_block(r, k),
        sigma_high: f.sigma[..r].to_vec(),
        retained_fraction: fraction,
        r_count: r,
    })
}

/// `G − U_h U_hᵀ G V_h V_hᵀ`. With an empty high subspace the input is
/// returned bit-for-bit.
pub fn project_gradient(grad: &Matrix, p: &SubspacePartition) -> Result<Matrix> {
    p.check_shape(grad, "project_gradient")?;
    if p.r_count == 0 {
        return Ok(grad.clone());
    }
    let out = grad - &p.high_component(grad)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("projected gradient".into()));
    }
    Ok(out)
}

/// `‖U_hᵀ G V_h‖_F`: how much of `G` acts inside the retained subspace.
pub fn interference(grad: &Matrix, p: &SubspacePartition) -> Result<f64> {
    p.check_shape(grad, "interference")?;
    if p.r_count == 0 {
        return Ok(0.0);
    }
    Ok(frobenius_norm(&p.high_block(grad)))
}
