//! Similarity-weighted sampling.
//!
//! A [`SamplingPlan`] normalizes similarity scores into a categorical
//! distribution over training rows. Rows are drawn from it either batch by
//! batch ([`draw_batch`]) or once up front into a resampled dataset of
//! `floor(t * n)` rows ([`resample_dataset`]). All draws are with replacement
//! and go through an [`AliasTable`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::similarity::SimilarityScores;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    WeightedBatch,
    ResampleDataset { t: f64 },
}

/// What to do when every score is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    #[default]
    Uniform,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    probabilities: Vec<f64>,
    scheme: Scheme,
    fallback: Fallback,
    fell_back: bool,
}

impl SamplingPlan {
    /// `probabilities[i] = scores[i] / total_mass`. With zero total mass the
    /// plan is uniform (logging a warning) or an error, per `fallback`.
    pub fn build(scores: &SimilarityScores, scheme: Scheme, fallback: Fallback) -> Result<Self> {
        let n = scores.len();
        if n == 0 {
            return Err(Error::invalid("cannot build a sampling plan over zero rows"));
        }
        if let Scheme::ResampleDataset { t } = scheme {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid(format!("resampling scale t must be positive, got {t}")));
            }
        }
        let mass = scores.total_mass();
        let (probabilities, fell_back) = if mass > 0.0 {
            (scores.scores().iter().map(|s| s / mass).collect(), false)
        } else {
            match fallback {
                Fallback::Error => return Err(Error::ZeroMass),
                Fallback::Uniform => {
                    log::warn!("all {n} similarity scores are zero; falling back to uniform sampling");
                    (vec![1.0 / n as f64; n], true)
                }
            }
        };
        Ok(Self {
            probabilities,
            scheme,
            fallback,
            fell_back,
        })
    }

    /// Plan over explicit nonnegative weights (normalized here).
    pub fn from_weights(weights: &[f64], scheme: Scheme) -> Result<Self> {
        Self::build(&SimilarityScores::new(weights.to_vec())?, scheme, Fallback::Error)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn fallback(&self) -> Fallback {
        self.fallback
    }

    /// True when the scores had zero mass and the uniform fallback was used.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Walker/Vose alias table: O(n) build, O(1) per draw.
///
/// Column `j` is chosen uniformly; it yields `j` with probability
/// `probability_row[j]` and `alias_row[j]` otherwise. Zero-probability rows
/// are never returned.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    probability_row: Vec<f64>,
    alias_row: Vec<usize>,
}

impl AliasTable {
    pub fn new(plan: &SamplingPlan) -> Self {
        Self::from_probabilities(plan.probabilities())
    }

    /// `probabilities` must be nonnegative, sum to 1 and be nonempty.
    pub fn from_probabilities(probabilities: &[f64]) -> Self {
        let n = probabilities.len();
        assert!(n > 0, "alias table over an empty distribution");
        let mut scaled: Vec<f64> = probabilities.iter().map(|p| p * n as f64).collect();
        let mut probability_row = vec![0.0; n];
        let mut alias_row: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        // Any positive-probability row; used to alias leftovers that carry no mass.
        let heaviest = (0..n)
            .max_by(|&a, &b| probabilities[a].total_cmp(&probabilities[b]))
            .unwrap();

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            probability_row[s] = scaled[s];
            alias_row[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for l in large {
            probability_row[l] = 1.0;
            alias_row[l] = l;
        }
        // Only rounding leaves anything here.
        for s in small {
            if scaled[s] > 0.0 {
                probability_row[s] = 1.0;
                alias_row[s] = s;
            } else {
                probability_row[s] = 0.0;
                alias_row[s] = heaviest;
            }
        }
        Self {
            probability_row,
            alias_row,
        }
    }

    pub fn len(&self) -> usize {
        self.probability_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probability_row.is_empty()
    }

    pub fn probability_row(&self) -> &[f64] {
        &self.probability_row
    }

    pub fn alias_row(&self) -> &[usize] {
        &self.alias_row
    }

    /// Probability of each index implied by the table.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out: Vec<f64> = self.probability_row.iter().map(|p| p / n).collect();
        for (j, (&p, &a)) in self.probability_row.iter().zip(&self.alias_row).enumerate() {
            if a != j {
                out[a] += (1.0 - p) / n;
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let j = rng.random_range(0..self.len());
        let u: f64 = rng.random();
        if u < self.probability_row[j] {
            j
        } else {
            self.alias_row[j]
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// A mini-batch gathered from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn gather(data: &Dataset, indices: Vec<usize>) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * data.p());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in &indices {
            inputs.extend_from_slice(data.row(i));
            labels.push(data.label(i));
        }
        Self {
            indices,
            inputs,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `b` independent draws, with replacement, from the table's distribution.
pub fn draw_batch<R: Rng + ?Sized>(table: &AliasTable, data: &Dataset, b: usize, rng: &mut R) -> Result<Batch> {
    if b == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if table.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            actual: table.len(),
        });
    }
    Ok(Batch::gather(data, table.sample_many(b, rng)))
}

/// `floor(t * n)`, rejecting a zero-row result.
pub fn resample_count(n: usize, t: f64) -> Result<usize> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("resampling scale t must be positive, got {t}")));
    }
    let count = (t * n as f64).floor() as usize;
    if count == 0 {
        return Err(Error::invalid(format!("floor({t} * {n}) is zero rows")));
    }
    Ok(count)
}

/// Row indices of a resampled dataset: `floor(t * n)` i.i.d. draws.
pub fn resample_indices<R: Rng + ?Sized>(plan: &SamplingPlan, t: f64, rng: &mut R) -> Result<Vec<usize>> {
    let count = resample_count(plan.len(), t)?;
    Ok(AliasTable::new(plan).sample_many(count, rng))
}

/// New dataset of `floor(t * n)` rows, each an i.i.d. draw from the plan.
pub fn resample_dataset<R: Rng + ?Sized>(plan: &SamplingPlan, data: &Dataset, t: f64, rng: &mut R) -> Result<Dataset> {
    if plan.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            actual: plan.len(),
        });
    }
    Ok(data.select(&resample_indices(plan, t, rng)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::rng::seeded;

    fn plan(weights: &[f64]) -> SamplingPlan {
        SamplingPlan::from_weights(weights, Scheme::WeightedBatch).unwrap()
    }

    fn line(n: usize) -> Dataset {
        Dataset::new(
            "l",
            Task::Regression,
            1,
            (0..n).map(|i| i as f64).collect(),
            vec![0.0; n],
        )
        .unwrap()
    }

    fn scores(s: &[f64]) -> SimilarityScores {
        SimilarityScores::new(s.to_vec()).unwrap()
    }

    #[test]
    fn normalizes() {
        assert_eq!(plan(&[1.0, 1.0, 0.0]).probabilities(), &[0.5, 0.5, 0.0]);
        assert_eq!(plan(&[3.0, 1.0, 0.0]).probabilities(), &[0.75, 0.25, 0.0]);
        assert_eq!(plan(&[2.0; 4]).probabilities(), &[0.25; 4]);
    }

    #[test]
    fn zero_mass_fallbacks() {
        let s = scores(&[0.0, 0.0, 0.0, 0.0]);
        let p = SamplingPlan::build(&s, Scheme::WeightedBatch, Fallback::Uniform).unwrap();
        assert!(p.fell_back());
        assert_eq!(p.probabilities(), &[0.25; 4]);
        assert!(matches!(
            SamplingPlan::build(&s, Scheme::WeightedBatch, Fallback::Error),
            Err(Error::ZeroMass)
        ));
        assert!(SamplingPlan::build(&scores(&[]), Scheme::WeightedBatch, Fallback::Uniform).is_err());
    }

    #[test]
    fn alias_reconstruction_small_cases() {
        let t = AliasTable::from_probabilities(&[0.5, 0.5]);
        assert_eq!(t.reconstruct(), vec![0.5, 0.5]);
        let p = [0.75, 0.25, 0.0];
        let t = AliasTable::from_probabilities(&p);
        for (a, b) in t.reconstruct().iter().zip(p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alias_reconstruction_random() {
        use rand::Rng as _;
        let mut rng = seeded(4);
        let w: Vec<f64> = (0..1000)
            .map(|i| if i % 7 == 0 { 0.0 } else { rng.random::<f64>() })
            .collect();
        let p = plan(&w);
        let rec = AliasTable::new(&p).reconstruct();
        // Reconstruction oracle: independent per-index sum over the table.
        for (i, (&a, &b)) in rec.iter().zip(p.probabilities()).enumerate() {
            assert!((a - b).abs() < 1e-9, "index {i}: {a} vs {b}");
        }
    }

    #[test]
    fn degenerate_batch() {
        let t = AliasTable::new(&plan(&[1.0, 0.0, 0.0]));
        let b = draw_batch(&t, &line(3), 17, &mut seeded(0)).unwrap();
        assert_eq!(b.indices, vec![0; 17]);
        assert_eq!(b.inputs, vec![0.0; 17]);
        assert!(draw_batch(&t, &line(3), 0, &mut seeded(0)).is_err());
        assert!(draw_batch(&t, &line(4), 1, &mut seeded(0)).is_err());
    }

    fn frequencies(table: &AliasTable, draws: usize, seed: u64) -> Vec<f64> {
        let mut counts = vec![0usize; table.len()];
        let mut rng = seeded(seed);
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn uniform_frequencies() {
        let f = frequencies(&AliasTable::new(&plan(&[1.0; 4])), 100_000, 1);
        assert!(f.iter().all(|&v| (v - 0.25).abs() < 0.01), "{f:?}");
    }

    #[test]
    fn skewed_frequencies() {
        let f = frequencies(&AliasTable::new(&plan(&[0.75, 0.25, 0.0])), 100_000, 2);
        assert!((f[0] - 0.75).abs() < 0.01 && (f[1] - 0.25).abs() < 0.01, "{f:?}");
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn resample_sizes() {
        let p = plan(&[1.0; 100]);
        let d = line(100);
        let r = resample_dataset(&p, &d, 10.0, &mut seeded(3)).unwrap();
        assert_eq!(r.n(), 1000);
        assert!(r.rows().all(|row| d.rows().any(|o| o == row)));
        assert_eq!(resample_dataset(&p, &d, 0.5, &mut seeded(3)).unwrap().n(), 50);
        assert!(resample_dataset(&p, &d, 0.001, &mut seeded(3)).is_err());
        assert!(resample_dataset(&p, &d, -1.0, &mut seeded(3)).is_err());
    }

    #[test]
    fn degenerate_resample() {
        let mut w = vec![0.0; 20];
        w[0] = 3.0;
        let r = resample_dataset(&plan(&w), &line(20), 2.5, &mut seeded(8)).unwrap();
        assert_eq!(r.n(), 50);
        assert!(r.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resample_matches_batch_distribution() {
        let w = [0.1, 0.4, 0.0, 0.2, 0.3];
        let p = plan(&w);
        let rows = resample_indices(&p, 20_000.0, &mut seeded(5)).unwrap();
        let table = AliasTable::new(&p);
        let pooled: Vec<usize> = (0..1000)
            .flat_map(|k| {
                draw_batch(&table, &line(5), 100, &mut seeded(1000 + k))
                    .unwrap()
                    .indices
            })
            .collect();
        for i in 0..5 {
            let a = rows.iter().filter(|&&r| r == i).count() as f64 / rows.len() as f64;
            let b = pooled.iter().filter(|&&r| r == i).count() as f64 / pooled.len() as f64;
            assert!((a - b).abs() < 0.01, "row {i}: {a} vs {b}");
        }
    }

    #[test]
    fn determinism() {
        let t = AliasTable::new(&plan(&[0.2, 0.3, 0.5]));
        assert_eq!(t.sample_many(64, &mut seeded(9)), t.sample_many(64, &mut seeded(9)));
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reconstruction_and_exclusion(
                w in vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..60),
                seed: u64,
            ) {
                prop_assume!(w.iter().sum::<f64>() > 0.0);
                let p = plan(&w);
                let t = AliasTable::new(&p);
                for (a, b) in t.reconstruct().iter().zip(p.probabilities()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                for i in t.sample_many(500, &mut seeded(seed)) {
                    prop_assert!(w[i] > 0.0);
                }
            }
        }
    }
}
