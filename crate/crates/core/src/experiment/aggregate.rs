use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Quantile by linear interpolation between order statistics
/// (`h = (m - 1) q`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean: f64,
    /// 25th percentile.
    pub lower: f64,
    /// 75th percentile.
    pub upper: f64,
}

/// Mean and interquartile band per epoch. The mean can fall outside the band.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub points: Vec<CurvePoint>,
}

impl AggregateCurve {
    /// `series[s][e]` is split `s` at epoch `e + 1`; every split needs the
    /// same number of epochs.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let epochs = series.first().map_or(0, Vec::len);
        if series.is_empty() || series.iter().any(|s| s.len() != epochs) {
            return Err(Error::invalid("aggregation needs equally long, nonempty series"));
        }
        let points = (0..epochs)
            .map(|e| {
                let mut column: Vec<f64> = series.iter().map(|s| s[e]).collect();
                let mean = column.iter().sum::<f64>() / column.len() as f64;
                column.sort_by(f64::total_cmp);
                CurvePoint {
                    epoch: e + 1,
                    mean,
                    lower: quantile_sorted(&column, 0.25),
                    upper: quantile_sorted(&column, 0.75),
                }
            })
            .collect();
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    /// First epoch whose mean is at or below `level`.
    pub fn first_epoch_at_or_below(&self, level: f64) -> Option<usize> {
        self.points.iter().find(|p| p.mean <= level).map(|p| p.epoch)
    }
}

/// Sample mean, sample standard deviation (n - 1) and standard error.
pub fn mean_sd_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt(), var.sqrt() / n.sqrt())
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}
