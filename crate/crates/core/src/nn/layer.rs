use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Layer descriptor. Convolutions are stride 1 without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    Dense {
        input: usize,
        output: usize,
    },
    Relu,
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
}

fn chw(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Some((c, h, w)),
        _ => None,
    }
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Dense { input, output } => input * output + output,
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => out_channels * in_channels * kernel * kernel + out_channels,
            _ => 0,
        }
    }

    /// Number of inputs feeding each weight's output unit.
    pub fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { input, .. } => input,
            Layer::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    /// Weights come first in the parameter slice, biases last.
    pub fn weight_count(&self) -> usize {
        match *self {
            Layer::Dense { input, output } => input * output,
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => out_channels * in_channels * kernel * kernel,
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            expected,
            actual: input.to_vec(),
        };
        match *self {
            Layer::Dense { input: d, output } => {
                if input != [d] {
                    return Err(mismatch(vec![d]));
                }
                Ok(vec![output])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                let (c, h, w) = chw(input).ok_or_else(|| mismatch(vec![in_channels, 0, 0]))?;
                if c != in_channels {
                    return Err(mismatch(vec![in_channels, h, w]));
                }
                if kernel == 0 || kernel > h || kernel > w {
                    return Err(Error::invalid(format!("kernel {kernel} does not fit a {h}x{w} input")));
                }
                Ok(vec![out_channels, h - kernel + 1, w - kernel + 1])
            }
            Layer::MaxPool2d { window, stride } => {
                let (c, h, w) = chw(input).ok_or_else(|| mismatch(vec![0, 0, 0]))?;
                if window == 0 || stride == 0 || window > h || window > w {
                    return Err(Error::invalid(format!(
                        "pool window {window} (stride {stride}) does not fit a {h}x{w} input"
                    )));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
        }
    }
}

/// Per-sample geometry needed by the kernels.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl Geometry {
    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }
}

/// Forward pass over a batch. `argmax` receives max-pool winners.
pub(crate) fn forward(
    layer: &Layer,
    geo: &Geometry,
    params: &[f64],
    input: &[f64],
    batch: usize,
    argmax: &mut Vec<usize>,
) -> Vec<f64> {
    let (in_len, out_len) = (geo.in_len(), geo.out_len());
    let mut out = vec![0.0; batch * out_len];
    match *layer {
        Layer::Dense {
            input: n_in,
            output: n_out,
        } => {
            let (w, b) = params.split_at(n_in * n_out);
            for (x, y) in input.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
                for (o, y_o) in y.iter_mut().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    *y_o = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                }
            }
        }
        Layer::Relu => {
            for (y, &x) in out.iter_mut().zip(input) {
                *y = x.max(0.0);
            }
        }
        Layer::Flatten => out.copy_from_slice(input),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => {
            let (h, w) = (geo.in_shape[1], geo.in_shape[2]);
            let (oh, ow) = (geo.out_shape[1], geo.out_shape[2]);
            let (weights, bias) = params.split_at(out_channels * in_channels * kernel * kernel);
            for (x, y) in input.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
                for oc in 0..out_channels {
                    let plane = &mut y[oc * oh * ow..(oc + 1) * oh * ow];
                    plane.fill(bias[oc]);
                    for ic in 0..in_channels {
                        let src = &x[ic * h * w..(ic + 1) * h * w];
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let wv = weights[((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                for oy in 0..oh {
                                    let s = &src[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                                    let d = &mut plane[oy * ow..(oy + 1) * ow];
                                    for (dv, sv) in d.iter_mut().zip(s) {
                                        *dv += wv * sv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Layer::MaxPool2d { window, stride } => {
            let (c, h, w) = (geo.in_shape[0], geo.in_shape[1], geo.in_shape[2]);
            let (oh, ow) = (geo.out_shape[1], geo.out_shape[2]);
            argmax.clear();
            argmax.reserve(batch * out_len);
            for (x, y) in input.chunks_exact(in_len).zip(out.chunks_exact_mut(out_len)) {
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = (usize::MAX, f64::NEG_INFINITY);
                            for ky in 0..window {
                                for kx in 0..window {
                                    let at = ch * h * w + (oy * stride + ky) * w + ox * stride + kx;
                                    if x[at] > best.1 || best.0 == usize::MAX {
                                        best = (at, x[at]);
                                    }
                                }
                            }
                            y[(ch * oh + oy) * ow + ox] = best.1;
                            argmax.push(best.0);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward pass. Accumulates parameter gradients into `grad` and returns the
/// gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    layer: &Layer,
    geo: &Geometry,
    params: &[f64],
    input: &[f64],
    argmax: &[usize],
    d_out: &[f64],
    batch: usize,
    grad: &mut [f64],
) -> Vec<f64> {
    let (in_len, out_len) = (geo.in_len(), geo.out_len());
    let mut d_in = vec![0.0; batch * in_len];
    match *layer {
        Layer::Dense {
            input: n_in,
            output: n_out,
        } => {
            let (w, _) = params.split_at(n_in * n_out);
            let (gw, gb) = grad.split_at_mut(n_in * n_out);
            for ((x, dy), dx) in input
                .chunks_exact(n_in)
                .zip(d_out.chunks_exact(n_out))
                .zip(d_in.chunks_exact_mut(n_in))
            {
                for (o, &g) in dy.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += g * x[i];
                        dx[i] += g * row[i];
                    }
                }
            }
        }
        Layer::Relu => {
            for ((dx, &g), &x) in d_in.iter_mut().zip(d_out).zip(input) {
                *dx = if x > 0.0 { g } else { 0.0 };
            }
        }
        Layer::Flatten => d_in.copy_from_slice(d_out),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => {
            let (h, w) = (geo.in_shape[1], geo.in_shape[2]);
            let (oh, ow) = (geo.out_shape[1], geo.out_shape[2]);
            let n_w = out_channels * in_channels * kernel * kernel;
            let (weights, _) = params.split_at(n_w);
            let (gw, gb) = grad.split_at_mut(n_w);
            for ((x, dy), dx) in input
                .chunks_exact(in_len)
                .zip(d_out.chunks_exact(out_len))
                .zip(d_in.chunks_exact_mut(in_len))
            {
                for oc in 0..out_channels {
                    let plane = &dy[oc * oh * ow..(oc + 1) * oh * ow];
                    gb[oc] += plane.iter().sum::<f64>();
                    for ic in 0..in_channels {
                        let src = &x[ic * h * w..(ic + 1) * h * w];
                        let dsrc = &mut dx[ic * h * w..(ic + 1) * h * w];
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                let wv = weights[wi];
                                let mut acc = 0.0;
                                for oy in 0..oh {
                                    let base = (oy + ky) * w + kx;
                                    let g = &plane[oy * ow..(oy + 1) * ow];
                                    let s = &src[base..base + ow];
                                    let ds = &mut dsrc[base..base + ow];
                                    for ((gv, sv), dv) in g.iter().zip(s).zip(ds.iter_mut()) {
                                        acc += gv * sv;
                                        *dv += wv * gv;
                                    }
                                }
                                gw[wi] += acc;
                            }
                        }
                    }
                }
            }
        }
        Layer::MaxPool2d { .. } => {
            for (b, (dy, dx)) in d_out
                .chunks_exact(out_len)
                .zip(d_in.chunks_exact_mut(in_len))
                .enumerate()
            {
                let winners = &argmax[b * out_len..(b + 1) * out_len];
                for (&at, &g) in winners.iter().zip(dy) {
                    dx[at] += g;
                }
            }
        }
    }
    d_in
}
