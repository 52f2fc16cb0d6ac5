//! Offline fixture: Gaussian clusters, each with its own labeling rule.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTask {
    /// `y = beta_c . x + bias_c + noise`, with `beta_c` drawn per cluster.
    Regression,
    /// `y = argmax_k (W_c (x - center_c))_k`, with `W_c` drawn per cluster.
    Classification { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SyntheticSpec {
    pub n_per_cluster: usize,
    pub p: usize,
    pub clusters: usize,
    pub task: SyntheticTask,
    /// Minimum distance between cluster centers, in within-cluster std units.
    pub separation: f64,
    /// Std of the additive regression noise.
    pub noise: f64,
    /// Probability that a classification label is replaced by a uniform class.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: 200,
            p: 5,
            clusters: 2,
            task: SyntheticTask::Regression,
            separation: 6.0,
            noise: 0.1,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn place_centers(spec: &SyntheticSpec, rng: &mut Rng) -> Vec<Vec<f64>> {
    let far_enough = |centers: &[Vec<f64>], c: &[f64]| {
        centers
            .iter()
            .all(|o| o.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= spec.separation)
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.clusters);
    for k in 0..spec.clusters {
        let mut placed = None;
        for _ in 0..1000 {
            let c: Vec<f64> = (0..spec.p).map(|_| normal(rng) * spec.separation).collect();
            if far_enough(&centers, &c) {
                placed = Some(c);
                break;
            }
        }
        // Crowded low-dimensional case: line the clusters up along axis 0.
        let c = placed.unwrap_or_else(|| {
            let mut c = vec![0.0; spec.p];
            c[0] = 2.0 * spec.separation * (k as f64 + 1.0);
            c
        });
        centers.push(c);
    }
    centers
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Dataset> {
        if self.n_per_cluster == 0 || self.p == 0 || self.clusters == 0 {
            return Err(Error::invalid("synthetic counts must all be at least 1"));
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0 && (0.0..=1.0).contains(&self.label_noise)) {
            return Err(Error::invalid("synthetic separation/noise out of range"));
        }
        let mut rng = seeded(self.seed);
        let centers = place_centers(self, &mut rng);
        let n = self.n_per_cluster * self.clusters;
        let mut features = Vec::with_capacity(n * self.p);
        let mut labels = Vec::with_capacity(n);
        let mut cluster_of = Vec::with_capacity(n);

        let (task, rules): (Task, Vec<Vec<f64>>) = match self.task {
            SyntheticTask::Regression => (
                Task::Regression,
                // p slopes followed by a bias per cluster
                (0..self.clusters)
                    .map(|_| (0..=self.p).map(|_| normal(&mut rng)).collect())
                    .collect(),
            ),
            SyntheticTask::Classification { classes } => {
                if classes < 2 {
                    return Err(Error::invalid("synthetic classification needs at least 2 classes"));
                }
                (
                    Task::Classification(classes),
                    (0..self.clusters)
                        .map(|_| (0..classes * self.p).map(|_| normal(&mut rng)).collect())
                        .collect(),
                )
            }
        };

        for (c, center) in centers.iter().enumerate() {
            for _ in 0..self.n_per_cluster {
                let x: Vec<f64> = center.iter().map(|m| m + normal(&mut rng)).collect();
                let rule = &rules[c];
                let y = match self.task {
                    SyntheticTask::Regression => {
                        let lin: f64 = x.iter().zip(rule).map(|(a, b)| a * b).sum();
                        lin + rule[self.p] + self.noise * normal(&mut rng)
                    }
                    SyntheticTask::Classification { classes } => {
                        let mut best = (0, f64::NEG_INFINITY);
                        for k in 0..classes {
                            let w = &rule[k * self.p..(k + 1) * self.p];
                            let s: f64 = x.iter().zip(center).zip(w).map(|((a, m), b)| (a - m) * b).sum();
                            if s > best.1 {
                                best = (k, s);
                            }
                        }
                        if rng.random::<f64>() < self.label_noise {
                            rng.random_range(0..classes) as f64
                        } else {
                            best.0 as f64
                        }
                    }
                };
                features.extend_from_slice(&x);
                labels.push(y);
                cluster_of.push(c);
            }
        }
        let name = format!("synthetic-{}x{}", self.clusters, self.n_per_cluster);
        Dataset::new(name, task, self.p, features, labels)?.with_clusters(cluster_of)
    }
}

/// Regression clusters with default separation and noise.
pub fn generate_synthetic_clustered(
    n_per_cluster: usize,
    p: usize,
    cluster_count: usize,
    seed: u64,
) -> Result<Dataset> {
    SyntheticSpec {
        n_per_cluster,
        p,
        clusters: cluster_count,
        seed,
        ..SyntheticSpec::default()
    }
    .generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_metadata() {
        let d = generate_synthetic_clustered(100, 5, 2, 1).unwrap();
        assert_eq!((d.n(), d.p()), (200, 5));
        let c = d.clusters().unwrap();
        assert_eq!(c.iter().filter(|&&k| k == 1).count(), 100);
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic_clustered(50, 3, 3, 9).unwrap();
        let b = generate_synthetic_clustered(50, 3, 3, 9).unwrap();
        let bits = |d: &Dataset| -> Vec<u64> { d.features().iter().chain(d.labels()).map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&generate_synthetic_clustered(50, 3, 3, 10).unwrap()));
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(generate_synthetic_clustered(0, 3, 2, 0).is_err());
        assert!(generate_synthetic_clustered(3, 0, 2, 0).is_err());
        assert!(generate_synthetic_clustered(3, 3, 0, 0).is_err());
    }

    /// Nearest-centroid classifier built from the sample means of each cluster.
    #[test]
    fn nearest_centroid_recovers_clusters() {
        for (clusters, p, seed) in [(2, 5, 0), (4, 8, 1), (3, 2, 2)] {
            let d = generate_synthetic_clustered(200, p, clusters, seed).unwrap();
            let labels = d.clusters().unwrap();
            let mut centroids = vec![vec![0.0; p]; clusters];
            let mut counts = vec![0usize; clusters];
            for (row, &c) in d.rows().zip(labels) {
                counts[c] += 1;
                for (a, b) in centroids[c].iter_mut().zip(row) {
                    *a += b;
                }
            }
            for (c, n) in centroids.iter_mut().zip(&counts) {
                c.iter_mut().for_each(|v| *v /= *n as f64);
            }
            let correct = d
                .rows()
                .zip(labels)
                .filter(|(row, &c)| {
                    let dist =
                        |k: usize| -> f64 { centroids[k].iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum() };
                    (0..clusters).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap() == c
                })
                .count();
            assert!(
                correct as f64 / d.n() as f64 >= 0.99,
                "{clusters} clusters: {correct}/{}",
                d.n()
            );
        }
    }

    #[test]
    fn classification_labels_in_range() {
        let d = SyntheticSpec {
            task: SyntheticTask::Classification { classes: 3 },
            label_noise: 0.1,
            ..SyntheticSpec::default()
        }
        .generate()
        .unwrap();
        assert_eq!(d.task(), Task::Classification(3));
        for k in 0..3 {
            assert!(d.labels().contains(&(k as f64)));
        }
    }
}
