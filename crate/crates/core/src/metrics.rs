//! Continual-learning metrics over the accuracy matrix.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::continual::{RankAllocation, RunConfig};
use crate::error::{Error, Result};
use crate::importance::ImportanceProfile;

/// Lower-triangular matrix where `row(t)[j]` is the test metric on task `j`
/// after finishing training on task `t` (both 0-based here).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks the triangular shape: row `t` has `t + 1` entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (t, row) in rows.iter().enumerate() {
            if row.len() != t + 1 {
                return Err(Error::dims("accuracy matrix row", t + 1, row.len()));
            }
        }
        Ok(Self { rows })
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::dims("accuracy matrix row", self.rows.len() + 1, row.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn task_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Entry for task `j` after task `t`, 0-based.
    pub fn get(&self, t: usize, j: usize) -> Option<f64> {
        self.rows.get(t).and_then(|r| r.get(j)).copied()
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }
}

/// Mean of the final row: `AA = (1/T) Σ_j A_{T,j}`.
pub fn average_accuracy(m: &AccuracyMatrix) -> Result<f64> {
    let row = m
        .last_row()
        .ok_or_else(|| Error::InvalidArgument("accuracy matrix has no rows".into()))?;
    if row.len() != m.task_count() {
        return Err(Error::InvalidArgument("accuracy matrix is incomplete".into()));
    }
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// `BWT_t = (1/t) Σ_{i=1}^{t−1} (A_{t,i} − A_{i,i})` with 1-based `t`.
///
/// The normalization is `1/t` even though the sum has `t − 1` terms, which
/// matches the published TRACE definition. `t = 1` has an empty sum and
/// returns 0.
pub fn backward_transfer(m: &AccuracyMatrix, t: usize) -> Result<f64> {
    if t == 0 || t > m.task_count() {
        return Err(Error::InvalidArgument(format!(
            "backward transfer needs 1 <= t <= {}, got {t}",
            m.task_count()
        )));
    }
    let row = &m.rows[t - 1];
    let sum = (0..t - 1).fold(0.0, |acc, i| acc + (row[i] - m.rows[i][i]));
    Ok(sum / t as f64)
}

/// Mean elementwise change `(1/M) Σ (after_i − before_i)` over an evaluation suite.
pub fn suite_delta(before: &[f64], after: &[f64]) -> Result<f64> {
    if before.is_empty() || before.len() != after.len() {
        return Err(Error::dims("suite_delta", before.len().max(1), after.len()));
    }
    Ok(after.iter().zip(before).map(|(a, b)| a - b).sum::<f64>() / before.len() as f64)
}

/// Everything one seeded run produced. Serialized as JSON with the field
/// names below; `wall_clock_seconds` is the only non-deterministic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub accuracy_matrix: AccuracyMatrix,
    pub aa: f64,
    /// `BWT_T` for the final task.
    pub bwt: f64,
    /// `BWT_t` for `t = 1..=T`.
    pub bwt_series: Vec<f64>,
    pub ability_before: Option<Vec<f64>>,
    pub ability_after: Option<Vec<f64>>,
    pub ability_delta: Option<f64>,
    pub interference_max: f64,
    pub first_order_max: f64,
    pub importance_profiles: Vec<Option<ImportanceProfile>>,
    pub rank_allocations: Vec<Vec<RankAllocation>>,
    pub final_train_loss: Vec<f64>,
    pub steps: usize,
    pub parameter_count_before: usize,
    pub parameter_count_after: usize,
    pub warnings: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Recomputes AA and BWT from the stored matrix.
    pub fn recompute(&self) -> Result<(f64, f64)> {
        let t = self.accuracy_matrix.task_count();
        Ok((
            average_accuracy(&self.accuracy_matrix)?,
            backward_transfer(&self.accuracy_matrix, t)?,
        ))
    }
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "run_id",
    "trainer",
    "seed",
    "aa",
    "bwt",
    "ability_delta",
    "interference_max",
    "first_order_max",
    "warnings",
];

/// One summary row per report.
pub fn write_summary_csv<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a RunReport)>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for (run_id, r) in rows {
        w.write_record([
            run_id.to_string(),
            r.config.training.trainer.name().to_string(),
            r.seed.to_string(),
            r.aa.to_string(),
            r.bwt.to_string(),
            r.ability_delta.map(|d| d.to_string()).unwrap_or_default(),
            r.interference_max.to_string(),
            r.first_order_max.to_string(),
            r.warnings.join("; "),
        ])?;
    }
    w.flush()?;
    Ok(())
}
