//! Similarity of a training input to a set of target inputs.
//!
//! The default measure is the thresholded cosine-max
//! `s(x; w_1..w_g) = max{0, cos(x, w_1), ..., cos(x, w_g)}`, which lies in
//! `[0, 1]`, equals 1 exactly when `x` points the same way as some target and
//! equals 0 exactly when `x` is at least 90 degrees from every target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TargetSet};
use crate::{Error, Result};

/// Norms below this count as zero; such vectors get cosine 0.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    CosineMax,
    /// Every sample scores 1. Targeted sampling then reduces to uniform
    /// sampling with replacement.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMeasure {
    pub kind: MeasureKind,
    pub epsilon: f64,
}

impl Default for SimilarityMeasure {
    fn default() -> Self {
        Self::cosine_max()
    }
}

impl SimilarityMeasure {
    pub fn cosine_max() -> Self {
        Self {
            kind: MeasureKind::CosineMax,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: MeasureKind::Constant,
            epsilon: DEFAULT_EPSILON,
        }
    }

    fn score_unchecked(&self, x: &[f64], targets: &TargetSet) -> f64 {
        match self.kind {
            MeasureKind::Constant => 1.0,
            MeasureKind::CosineMax => {
                let xx = dot(x, x);
                targets
                    .iter()
                    .map(|w| cosine_from_parts(dot(x, w), xx, dot(w, w), self.epsilon))
                    .fold(0.0, f64::max)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine_from_parts(xw: f64, xx: f64, ww: f64, epsilon: f64) -> f64 {
    let eps2 = epsilon * epsilon;
    if xx < eps2 || ww < eps2 {
        return 0.0;
    }
    // sqrt(xx * ww) rather than sqrt(xx) * sqrt(ww): for x == w this is exact.
    (xw / (xx * ww).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine of the angle between `x` and `w`; 0 when either norm is below
/// [`DEFAULT_EPSILON`].
pub fn cosine(x: &[f64], w: &[f64]) -> Result<f64> {
    cosine_with_epsilon(x, w, DEFAULT_EPSILON)
}

pub fn cosine_with_epsilon(x: &[f64], w: &[f64], epsilon: f64) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: w.len(),
        });
    }
    Ok(cosine_from_parts(dot(x, w), dot(x, x), dot(w, w), epsilon))
}

pub fn similarity_to_targets(x: &[f64], targets: &TargetSet, measure: &SimilarityMeasure) -> Result<f64> {
    if targets.g() == 0 {
        return Err(Error::EmptyTargets);
    }
    if x.len() != targets.p() {
        return Err(Error::DimensionMismatch {
            expected: targets.p(),
            actual: x.len(),
        });
    }
    Ok(measure.score_unchecked(x, targets))
}

/// One score per training row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityScores {
    scores: Vec<f64>,
    total_mass: f64,
}

impl SimilarityScores {
    /// Wraps externally computed scores. Every score must be finite and >= 0.
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!(
                "score {} at row {i} is not a finite nonnegative number",
                scores[i]
            )));
        }
        let total_mass = scores.iter().sum();
        Ok(Self { scores, total_mass })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Sum of scores, accumulated in index order.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Scores every row of `data` against `targets`. Rows are evaluated in
/// parallel; the result does not depend on scheduling.
pub fn score_dataset(data: &Dataset, targets: &TargetSet, measure: &SimilarityMeasure) -> Result<SimilarityScores> {
    if targets.g() == 0 {
        return Err(Error::EmptyTargets);
    }
    if data.p() != targets.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            actual: targets.p(),
        });
    }
    let scores: Vec<f64> = data
        .features()
        .par_chunks_exact(data.p())
        .map(|x| measure.score_unchecked(x, targets))
        .collect();
    SimilarityScores::new(scores)
}
