//! Datasets, target sets and the loaders and transforms that produce them.

mod csv;
mod idx;
mod split;
mod standardize;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, read_csv_records, write_csv_records, write_dataset_csv, CsvSchema, LabelEncoding};
pub use self::idx::{load_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use self::split::{split_for_targeting, split_indices, split_indices_within};
pub use self::standardize::{StandardizationMode, StandardizationStats, DEFAULT_EPSILON};
pub use self::synthetic::{generate_synthetic_clustered, SyntheticSpec, SyntheticTask};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    /// `k`-class classification; labels are class indices `0..k`.
    Classification(usize),
}

impl Task {
    pub fn is_regression(&self) -> bool {
        matches!(self, Task::Regression)
    }

    /// Width of the network output for this task.
    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Regression => 1,
            Task::Classification(k) => k,
        }
    }
}

/// Labeled samples stored row-major, `n` rows of `p` features.
///
/// Classification labels are stored as exact small integers in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    task: Task,
    p: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    image_shape: Option<[usize; 3]>,
    clusters: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: Task, p: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if labels.is_empty() {
            return Err(Error::invalid("dataset must have at least one row"));
        }
        if features.len() != labels.len() * p {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * p,
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                i / p,
                i % p
            )));
        }
        match task {
            Task::Regression => {
                if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("non-finite label at row {i}")));
                }
            }
            Task::Classification(k) => {
                if k == 0 {
                    return Err(Error::invalid("classification needs at least one class"));
                }
                for (i, &y) in labels.iter().enumerate() {
                    if !(y >= 0.0 && y.fract() == 0.0 && (y as usize) < k) {
                        return Err(Error::invalid(format!(
                            "label {y} at row {i} is not a class index below {k}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            task,
            p,
            features,
            labels,
            image_shape: None,
            clusters: None,
        })
    }

    /// Records the `(channels, height, width)` layout of each flattened row.
    pub fn with_image_shape(mut self, shape: [usize; 3]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: shape.iter().product(),
            });
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn with_clusters(mut self, clusters: Vec<usize>) -> Result<Self> {
        if clusters.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: clusters.len(),
            });
        }
        self.clusters = Some(clusters);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.p)
    }

    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.image_shape
    }

    /// Cluster id of each row, for synthetic data.
    pub fn clusters(&self) -> Option<&[usize]> {
        self.clusters.as_deref()
    }

    /// New dataset made of the given rows, in order. Repeats are allowed.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.p);
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            task: self.task,
            p: self.p,
            features,
            labels,
            image_shape: self.image_shape,
            clusters: self.clusters.as_ref().map(|c| rows.iter().map(|&i| c[i]).collect()),
        }
    }

    pub(crate) fn map_parts(&self, features: Vec<f64>, labels: Vec<f64>) -> Dataset {
        debug_assert_eq!(features.len(), self.features.len());
        debug_assert_eq!(labels.len(), self.labels.len());
        Dataset {
            features,
            labels,
            ..self.clone()
        }
    }
}

/// Unlabeled target inputs. Their true labels, when known, are kept aside for
/// evaluation and are never read by any training path.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    p: usize,
    targets: Vec<f64>,
    held_out: Option<Vec<f64>>,
}

impl TargetSet {
    pub fn new(p: usize, targets: Vec<f64>, held_out_labels: Option<Vec<f64>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("target dimension must be at least 1"));
        }
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        if !targets.len().is_multiple_of(p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: targets.len() % p,
            });
        }
        let g = targets.len() / p;
        if let Some(labels) = &held_out_labels {
            if labels.len() != g {
                return Err(Error::DimensionMismatch {
                    expected: g,
                    actual: labels.len(),
                });
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite target value"));
        }
        Ok(Self {
            p,
            targets,
            held_out: held_out_labels,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().ok_or(Error::EmptyTargets)?.as_ref().len();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for r in rows {
            let r = r.as_ref();
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(p, flat, None)
    }

    pub fn g(&self) -> usize {
        self.targets.len() / self.p
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.p..(i + 1) * self.p]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.targets.chunks_exact(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.targets
    }

    /// Held-out labels; evaluation only.
    pub fn held_out_labels(&self) -> Option<&[f64]> {
        self.held_out.as_deref()
    }

    pub(crate) fn map_parts(&self, targets: Vec<f64>, held_out: Option<Vec<f64>>) -> TargetSet {
        TargetSet {
            p: self.p,
            targets,
            held_out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_class_labels() {
        let err = Dataset::new("x", Task::Classification(3), 1, vec![0.0, 1.0], vec![0.0, 3.0]);
        assert!(err.is_err());
        let err = Dataset::new("x", Task::Classification(3), 1, vec![0.0, 1.0], vec![0.5, 1.0]);
        assert!(err.is_err());
        assert!(Dataset::new("x", Task::Classification(3), 1, vec![0.0, 1.0], vec![2.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Dataset::new("x", Task::Regression, 1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(Dataset::new("x", Task::Regression, 1, vec![], vec![]).is_err());
        assert!(Dataset::new("x", Task::Regression, 0, vec![], vec![1.0]).is_err());
    }

    #[test]
    fn select_repeats_rows() {
        let d = Dataset::new("x", Task::Regression, 2, vec![1., 2., 3., 4.], vec![10., 20.]).unwrap();
        let s = d.select(&[1, 1, 0]);
        assert_eq!(s.features(), &[3., 4., 3., 4., 1., 2.]);
        assert_eq!(s.labels(), &[20., 20., 10.]);
    }

    #[test]
    fn target_set_shapes() {
        let t = TargetSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(t.g(), 2);
        assert_eq!(t.target(1), &[0.0, 1.0]);
        assert!(TargetSet::from_rows::<Vec<f64>>(&[]).is_err());
        assert!(TargetSet::new(2, vec![1.0, 2.0], Some(vec![1.0, 2.0])).is_err());
    }
}
