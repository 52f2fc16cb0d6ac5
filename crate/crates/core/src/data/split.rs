use rand::seq::index;

use super::{Dataset, TargetSet};
use crate::rng::Rng;
use crate::{Error, Result};

/// Draws `g` of `n` rows uniformly without replacement as targets. Returns
/// `(training_rows, target_rows)`; training rows keep their original order.
pub fn split_indices(n: usize, g: usize, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..n).collect();
    split_indices_within(n, &all, g, rng)
}

/// Like [`split_indices`], but targets come only from `candidates`.
pub fn split_indices_within(
    n: usize,
    candidates: &[usize],
    g: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if g == 0 || g >= n {
        return Err(Error::invalid(format!(
            "target group size {g} outside 1..={}",
            n.saturating_sub(1)
        )));
    }
    if g > candidates.len() {
        return Err(Error::invalid(format!(
            "target group size {g} exceeds the {} candidate rows",
            candidates.len()
        )));
    }
    let targets: Vec<usize> = index::sample(rng, candidates.len(), g)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    let mut is_target = vec![false; n];
    for &t in &targets {
        is_target[t] = true;
    }
    let training = (0..n).filter(|&i| !is_target[i]).collect();
    Ok((training, targets))
}

/// Removes `g` random rows from `data` and turns them into a target set whose
/// labels are held out for evaluation.
pub fn split_for_targeting(data: &Dataset, g: usize, rng: &mut Rng) -> Result<(Dataset, TargetSet)> {
    let (training, targets) = split_indices(data.n(), g, rng)?;
    Ok(partition(data, &training, &targets))
}

pub(crate) fn partition(data: &Dataset, training: &[usize], targets: &[usize]) -> (Dataset, TargetSet) {
    let train = data.select(training);
    let held = data.select(targets);
    let targets = TargetSet::new(data.p(), held.features().to_vec(), Some(held.labels().to_vec()))
        .expect("rows of a valid dataset form a valid target set");
    (train, targets)
}
