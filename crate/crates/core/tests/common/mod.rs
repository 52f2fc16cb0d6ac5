#![allow(dead_code)]

use rand::seq::index;
use targeted::nn::Network;
use targeted::rng::seeded;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor so that coordinates with vanishing gradients are judged
/// on absolute error.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(usize, f64, f64)>,
}

/// Central differences of the batch loss over `coords` sampled parameter
/// coordinates, compared with the analytic gradient.
pub fn check_gradient(net: &Network, inputs: &[f64], labels: &[f64], coords: usize, seed: u64) -> GradCheck {
    let (_, analytic) = net.loss_and_gradient(inputs, labels).unwrap();
    let count = coords.min(net.param_count());
    let picks = index::sample(&mut seeded(seed), net.param_count(), count).into_vec();
    let mut probe = net.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for j in picks {
        let orig = probe.params()[j];
        probe.params_mut()[j] = orig + FD_STEP;
        let (up, _) = probe.loss_and_gradient(inputs, labels).unwrap();
        probe.params_mut()[j] = orig - FD_STEP;
        let (down, _) = probe.loss_and_gradient(inputs, labels).unwrap();
        probe.params_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst = Some((j, a, numeric));
        }
        out.checked += 1;
    }
    out
}
