use serde::{Deserialize, Serialize};

use super::{Dataset, TargetSet};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizationMode {
    /// Per-column mean and standard deviation.
    ColumnWise,
    /// One mean and standard deviation over every feature cell.
    Overall,
}

/// Fitted shift/scale. Standard deviations use the population convention
/// (divide by `n`); division is always by `max(std, epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mode: StandardizationMode,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub epsilon: f64,
    /// `(mean, std)` of regression labels; `None` for classification.
    pub label: Option<(f64, f64)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, count) = values.clone().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    let mean = sum / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    (mean, var.sqrt())
}

impl StandardizationStats {
    /// Fits on the rows of `data` only. Regression labels get their own
    /// mean/std; classification labels are never touched.
    pub fn fit(data: &Dataset, mode: StandardizationMode) -> Result<Self> {
        if data.n() < 2 {
            return Err(Error::invalid(format!(
                "standardization needs at least 2 rows, got {}",
                data.n()
            )));
        }
        let p = data.p();
        let (means, std_devs) = match mode {
            StandardizationMode::ColumnWise => (0..p).map(|j| mean_std(data.rows().map(move |r| r[j]))).unzip(),
            StandardizationMode::Overall => {
                let (m, s) = mean_std(data.features().iter().copied());
                (vec![m], vec![s])
            }
        };
        let label = data
            .task()
            .is_regression()
            .then(|| mean_std(data.labels().iter().copied()));
        Ok(Self {
            mode,
            means,
            std_devs,
            epsilon: DEFAULT_EPSILON,
            label,
        })
    }

    fn shift_scale(&self, j: usize) -> (f64, f64) {
        let k = match self.mode {
            StandardizationMode::ColumnWise => j,
            StandardizationMode::Overall => 0,
        };
        (self.means[k], self.std_devs[k].max(self.epsilon))
    }

    fn expected_p(&self) -> Option<usize> {
        match self.mode {
            StandardizationMode::ColumnWise => Some(self.means.len()),
            StandardizationMode::Overall => None,
        }
    }

    fn check_p(&self, p: usize) -> Result<()> {
        match self.expected_p() {
            Some(e) if e != p => Err(Error::DimensionMismatch { expected: e, actual: p }),
            _ => Ok(()),
        }
    }

    fn transform_features(&self, values: &[f64], p: usize) -> Vec<f64> {
        let scale: Vec<(f64, f64)> = (0..p).map(|j| self.shift_scale(j)).collect();
        values
            .chunks_exact(p)
            .flat_map(|row| row.iter().zip(&scale).map(|(&x, &(m, s))| (x - m) / s))
            .collect()
    }

    pub fn standardize_label(&self, y: f64) -> f64 {
        match self.label {
            Some((m, s)) => (y - m) / s.max(self.epsilon),
            None => y,
        }
    }

    pub fn unstandardize_label(&self, y: f64) -> f64 {
        match self.label {
            Some((m, s)) => y * s.max(self.epsilon) + m,
            None => y,
        }
    }

    /// Maps standardized features back: `x * std + mean`.
    pub fn unstandardize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &z)| {
                let (m, s) = self.shift_scale(j);
                z * s + m
            })
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.check_p(data.p())?;
        let features = self.transform_features(data.features(), data.p());
        let labels = data.labels().iter().map(|&y| self.standardize_label(y)).collect();
        Ok(data.map_parts(features, labels))
    }

    /// Standardizes target inputs and, for regression, their held-out labels
    /// so that evaluation happens on the training scale.
    pub fn apply_targets(&self, targets: &TargetSet) -> Result<TargetSet> {
        self.check_p(targets.p())?;
        let values = self.transform_features(targets.values(), targets.p());
        let held_out = targets
            .held_out_labels()
            .map(|ys| ys.iter().map(|&y| self.standardize_label(y)).collect());
        Ok(targets.map_parts(values, held_out))
    }
}
