use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Training objective attached to the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Single real output, loss `(prediction - label)^2`.
    SquaredError,
    /// `k` logits, softmax applied inside the loss.
    SoftmaxCrossEntropy(usize),
}

impl Head {
    pub fn output_dim(&self) -> usize {
        match *self {
            Head::SquaredError => 1,
            Head::SoftmaxCrossEntropy(k) => k,
        }
    }

    pub fn loss_function(&self) -> LossFunction {
        match *self {
            Head::SquaredError => LossFunction::SquaredError,
            Head::SoftmaxCrossEntropy(k) => LossFunction::SoftmaxCrossEntropy(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFunction {
    SquaredError,
    SoftmaxCrossEntropy(usize),
    /// 1 when the arg-max logit is not the label (first index wins ties).
    ZeroOneError,
}

fn class_of(label: f64, k: usize) -> Result<usize> {
    if label >= 0.0 && label.fract() == 0.0 && (label as usize) < k {
        Ok(label as usize)
    } else {
        Err(Error::invalid(format!("label {label} is not a class index below {k}")))
    }
}

/// `log(sum(exp(z)))` with the maximum subtracted first.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

impl LossFunction {
    /// Per-sample losses for `outputs` (`labels.len()` rows of width `dim`).
    pub fn per_sample(&self, outputs: &[f64], labels: &[f64], dim: usize) -> Result<Vec<f64>> {
        if outputs.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: outputs.len(),
            });
        }
        outputs
            .chunks_exact(dim)
            .zip(labels)
            .map(|(z, &y)| match *self {
                LossFunction::SquaredError => {
                    if dim != 1 {
                        return Err(Error::DimensionMismatch {
                            expected: 1,
                            actual: dim,
                        });
                    }
                    Ok((z[0] - y).powi(2))
                }
                LossFunction::SoftmaxCrossEntropy(k) => {
                    if dim != k {
                        return Err(Error::DimensionMismatch {
                            expected: k,
                            actual: dim,
                        });
                    }
                    let c = class_of(y, k)?;
                    Ok((log_sum_exp(z) - z[c]).max(0.0))
                }
                LossFunction::ZeroOneError => {
                    let c = class_of(y, dim)?;
                    Ok(if argmax(z) == c { 0.0 } else { 1.0 })
                }
            })
            .collect()
    }

    pub fn mean(&self, outputs: &[f64], labels: &[f64], dim: usize) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::invalid("cannot average a loss over zero samples"));
        }
        let l = self.per_sample(outputs, labels, dim)?;
        Ok(l.iter().sum::<f64>() / l.len() as f64)
    }
}

impl Head {
    /// Mean loss over the batch and its gradient with respect to the outputs.
    pub(crate) fn loss_and_output_grad(&self, outputs: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
        let dim = self.output_dim();
        let b = labels.len();
        let loss = self.loss_function().mean(outputs, labels, dim)?;
        let scale = 1.0 / b as f64;
        let mut grad = vec![0.0; outputs.len()];
        match *self {
            Head::SquaredError => {
                for ((g, z), y) in grad.iter_mut().zip(outputs).zip(labels) {
                    *g = 2.0 * (z - y) * scale;
                }
            }
            Head::SoftmaxCrossEntropy(k) => {
                for ((g, z), &y) in grad.chunks_exact_mut(k).zip(outputs.chunks_exact(k)).zip(labels) {
                    let lse = log_sum_exp(z);
                    for (gi, zi) in g.iter_mut().zip(z) {
                        *gi = (zi - lse).exp() * scale;
                    }
                    g[y as usize] -= scale;
                }
            }
        }
        Ok((loss, grad))
    }
}
