use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layer::{self, Geometry, Layer};
use super::loss::{argmax, Head, LossFunction};
use super::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    layer: Layer,
    geo: Geometry,
    offset: usize,
}

/// Feed-forward network with a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    nodes: Vec<Node>,
    head: Head,
    params: Vec<f64>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.head == other.head
            && self.params == other.params
            && self.layers().eq(other.layers())
    }
}

impl Network {
    /// Checks that adjacent shapes compose and that the last layer matches
    /// the head. Parameters start at zero.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, head: Head) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid(format!("invalid input shape {input_shape:?}")));
        }
        let mut shape = input_shape.clone();
        let mut offset = 0;
        let mut nodes = Vec::with_capacity(layers.len());
        for layer in layers {
            let out = layer.output_shape(&shape)?;
            nodes.push(Node {
                layer,
                geo: Geometry {
                    in_shape: shape,
                    out_shape: out.clone(),
                },
                offset,
            });
            offset += layer.param_count();
            shape = out;
        }
        if shape != [head.output_dim()] {
            return Err(Error::ShapeMismatch {
                expected: vec![head.output_dim()],
                actual: shape,
            });
        }
        Ok(Self {
            input_shape,
            nodes,
            head,
            params: vec![0.0; offset],
        })
    }

    /// He initialization: weights ~ N(0, 2 / fan_in), biases zero.
    pub fn init_he(&mut self, rng: &mut Rng) {
        for node in &self.nodes {
            let fan_in = node.layer.fan_in();
            if fan_in == 0 {
                continue;
            }
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let slice = &mut self.params[node.offset..node.offset + node.layer.param_count()];
            let (w, b) = slice.split_at_mut(node.layer.weight_count());
            w.iter_mut().for_each(|v| *v = normal.sample(rng));
            b.fill(0.0);
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> + '_ {
        self.nodes.iter().map(|n| &n.layer)
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        self.nodes.iter().map(|n| n.geo.out_shape.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    fn layer_params(&self, node: &Node) -> &[f64] {
        &self.params[node.offset..node.offset + node.layer.param_count()]
    }

    fn batch_size(&self, inputs: &[f64]) -> Result<usize> {
        let len = self.input_len();
        if inputs.is_empty() || !inputs.len().is_multiple_of(len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: inputs.len(),
            });
        }
        Ok(inputs.len() / len)
    }

    /// Outputs (logits for classification) for a flat batch of inputs.
    pub fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let batch = self.batch_size(inputs)?;
        let mut act = inputs.to_vec();
        let mut scratch = Vec::new();
        for node in &self.nodes {
            act = layer::forward(
                &node.layer,
                &node.geo,
                self.layer_params(node),
                &act,
                batch,
                &mut scratch,
            );
        }
        Ok(act)
    }

    /// `input` has shape `[batch, ..input_shape]`; returns `[batch, outputs]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::ShapeMismatch {
                expected,
                actual: shape.to_vec(),
            });
        }
        let out = self.predict(input.values())?;
        Tensor::new(vec![shape[0], self.output_dim()], out)
    }

    /// Mean batch loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, inputs: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
        let batch = self.batch_size(inputs)?;
        if labels.len() != batch {
            return Err(Error::DimensionMismatch {
                expected: batch,
                actual: labels.len(),
            });
        }
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len() + 1);
        let mut winners: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        acts.push(inputs.to_vec());
        for (node, arg) in self.nodes.iter().zip(winners.iter_mut()) {
            let next = layer::forward(
                &node.layer,
                &node.geo,
                self.layer_params(node),
                acts.last().unwrap(),
                batch,
                arg,
            );
            acts.push(next);
        }
        let (loss, mut delta) = self.head.loss_and_output_grad(acts.last().unwrap(), labels)?;
        let mut grad = vec![0.0; self.params.len()];
        for (k, node) in self.nodes.iter().enumerate().rev() {
            let range = node.offset..node.offset + node.layer.param_count();
            delta = layer::backward(
                &node.layer,
                &node.geo,
                &self.params[range.clone()],
                &acts[k],
                &winners[k],
                &delta,
                batch,
                &mut grad[range],
            );
        }
        Ok((loss, grad))
    }

    /// `theta <- theta - learning_rate * gradient`.
    pub fn sgd_step(&mut self, gradient: &[f64], learning_rate: f64) -> Result<()> {
        if gradient.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: gradient.len(),
            });
        }
        for (p, g) in self.params.iter_mut().zip(gradient) {
            *p -= learning_rate * g;
        }
        Ok(())
    }

    /// Mean of `metric` over the given samples.
    pub fn evaluate(&self, inputs: &[f64], labels: &[f64], metric: LossFunction) -> Result<f64> {
        let outputs = self.predict(inputs)?;
        metric.mean(&outputs, labels, self.output_dim())
    }

    /// `1 - mean zero-one error`.
    pub fn accuracy(&self, inputs: &[f64], labels: &[f64]) -> Result<f64> {
        Ok(1.0 - self.evaluate(inputs, labels, LossFunction::ZeroOneError)?)
    }

    /// Arg-max class for each sample.
    pub fn classify(&self, inputs: &[f64]) -> Result<Vec<usize>> {
        let out = self.predict(inputs)?;
        Ok(out.chunks_exact(self.output_dim()).map(argmax).collect())
    }
}

/// `Dense(p, h1) - ReLU - ... - Dense(h_last, out)`, He-initialized.
pub fn build_mlp(p: usize, hidden: &[usize], head: Head, rng: &mut Rng) -> Result<Network> {
    if p == 0 || hidden.contains(&0) || head.output_dim() == 0 {
        return Err(Error::invalid("layer widths must be at least 1"));
    }
    let mut layers = Vec::new();
    let mut width = p;
    for &h in hidden {
        layers.push(Layer::Dense {
            input: width,
            output: h,
        });
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(Layer::Dense {
        input: width,
        output: head.output_dim(),
    });
    let mut net = Network::new(vec![p], layers, head)?;
    net.init_he(rng);
    Ok(net)
}

/// Two conv blocks (conv, ReLU, max-pool) followed by a dense classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvNetSpec {
    pub kernels: [usize; 2],
    pub channels: [usize; 2],
    pub pool_window: usize,
    pub pool_stride: usize,
}

impl Default for ConvNetSpec {
    fn default() -> Self {
        Self {
            kernels: [3, 5],
            channels: [16, 32],
            pool_window: 2,
            pool_stride: 2,
        }
    }
}

pub fn build_conv_net(image_shape: [usize; 3], spec: &ConvNetSpec, head: Head, rng: &mut Rng) -> Result<Network> {
    let mut layers = Vec::new();
    let mut shape = image_shape.to_vec();
    let mut channels = image_shape[0];
    for (&kernel, &out) in spec.kernels.iter().zip(&spec.channels) {
        for l in [
            Layer::Conv2d {
                in_channels: channels,
                out_channels: out,
                kernel,
            },
            Layer::Relu,
            Layer::MaxPool2d {
                window: spec.pool_window,
                stride: spec.pool_stride,
            },
        ] {
            shape = l.output_shape(&shape)?;
            layers.push(l);
        }
        channels = out;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense {
        input: shape.iter().product(),
        output: head.output_dim(),
    });
    let mut net = Network::new(image_shape.to_vec(), layers, head)?;
    net.init_he(rng);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn mlp_150_50_parameter_count() {
        let net = build_mlp(25, &[150, 50], Head::SquaredError, &mut seeded(0)).unwrap();
        assert_eq!(net.param_count(), 25 * 150 + 150 + 150 * 50 + 50 + 50 + 1);
        assert_eq!(net.param_count(), 11_501);
        let net = build_mlp(21, &[150, 50], Head::SoftmaxCrossEntropy(10), &mut seeded(0)).unwrap();
        assert_eq!(net.predict(&[0.0; 21]).unwrap().len(), 10);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = build_mlp(8, &[16, 4], Head::SquaredError, &mut seeded(5)).unwrap();
        let b = build_mlp(8, &[16, 4], Head::SquaredError, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        let c = build_mlp(8, &[16, 4], Head::SquaredError, &mut seeded(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn conv_net_flatten_size() {
        let net = build_conv_net(
            [1, 28, 28],
            &ConvNetSpec::default(),
            Head::SoftmaxCrossEntropy(10),
            &mut seeded(1),
        )
        .unwrap();
        let shapes = net.layer_shapes();
        assert_eq!(shapes[0], vec![16, 26, 26]);
        assert_eq!(shapes[2], vec![16, 13, 13]);
        assert_eq!(shapes[3], vec![32, 9, 9]);
        assert_eq!(shapes[5], vec![32, 4, 4]);
        assert_eq!(shapes[6], vec![512]);
        let x = Tensor::new(vec![2, 1, 28, 28], vec![0.5; 2 * 784]).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.shape(), &[2, 10]);
    }

    #[test]
    fn conv_net_underflow() {
        let err = build_conv_net(
            [1, 8, 8],
            &ConvNetSpec::default(),
            Head::SoftmaxCrossEntropy(10),
            &mut seeded(1),
        );
        assert!(err.is_err());
    }

    #[test]
    fn dense_dot_product() {
        let mut net = Network::new(vec![2], vec![Layer::Dense { input: 2, output: 1 }], Head::SquaredError).unwrap();
        net.set_params(vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.predict(&[3.0, 4.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn linear_gradient_by_hand() {
        let mut net = Network::new(vec![3], vec![Layer::Dense { input: 3, output: 1 }], Head::SquaredError).unwrap();
        let w = [0.5, -1.0, 2.0];
        net.set_params(vec![w[0], w[1], w[2], 0.0]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = 1.5;
        let (loss, grad) = net.loss_and_gradient(&x, &[y]).unwrap();
        let r: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - y;
        assert!((loss - r * r).abs() < 1e-14);
        for j in 0..3 {
            assert!((grad[j] - 2.0 * r * x[j]).abs() < 1e-14);
        }
        assert!((grad[3] - 2.0 * r).abs() < 1e-14);
    }

    #[test]
    fn uniform_logits_loss() {
        let net = Network::new(
            vec![2],
            vec![Layer::Dense { input: 2, output: 4 }],
            Head::SoftmaxCrossEntropy(4),
        )
        .unwrap();
        let (loss, _) = net.loss_and_gradient(&[1.0, -2.0], &[3.0]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn sgd_steps() {
        let mut net = Network::new(vec![1], vec![Layer::Dense { input: 1, output: 1 }], Head::SquaredError).unwrap();
        net.set_params(vec![1.0, 1.0]).unwrap();
        net.sgd_step(&[2.0, -2.0], 0.005).unwrap();
        assert!((net.params()[0] - 0.99).abs() < 1e-15 && (net.params()[1] - 1.01).abs() < 1e-15);
        let before = net.params().to_vec();
        net.sgd_step(&[0.0, 0.0], 0.005).unwrap();
        assert_eq!(net.params(), &before[..]);
        let (g1, g2) = ([0.3, -0.1], [-0.7, 0.4]);
        net.sgd_step(&g1, 0.005).unwrap();
        net.sgd_step(&g2, 0.005).unwrap();
        for j in 0..2 {
            let expect = before[j] - 0.005 * (g1[j] + g2[j]);
            assert!((net.params()[j] - expect).abs() < 1e-15);
        }
        assert!(net.sgd_step(&[1.0], 0.1).is_err());
    }

    #[test]
    fn evaluate_metrics() {
        let mut net = Network::new(vec![1], vec![Layer::Dense { input: 1, output: 1 }], Head::SquaredError).unwrap();
        net.set_params(vec![1.0, 0.0]).unwrap();
        assert_eq!(net.evaluate(&[2.0], &[1.0], LossFunction::SquaredError).unwrap(), 1.0);

        // Identity logits: class = arg-max coordinate of a one-hot input.
        let mut clf = Network::new(
            vec![3],
            vec![Layer::Dense { input: 3, output: 3 }],
            Head::SoftmaxCrossEntropy(3),
        )
        .unwrap();
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        clf.set_params(p).unwrap();
        let x = [1., 0., 0., 0., 1., 0., 0., 0., 1., 0., 1., 0., 1., 0., 0.];
        assert_eq!(clf.accuracy(&x, &[0., 1., 2., 1., 0.]).unwrap(), 1.0);
        assert_eq!(clf.accuracy(&x, &[1., 1., 2., 1., 0.]).unwrap(), 0.8);
    }

    /// Random predictor: accuracy on balanced labels should be near 1/k.
    #[test]
    fn random_predictor_accuracy() {
        use rand::Rng as _;
        let net = build_mlp(4, &[8], Head::SoftmaxCrossEntropy(10), &mut seeded(2)).unwrap();
        let mut rng = seeded(3);
        let n = 5000;
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 10) as f64).collect();
        let acc = net.accuracy(&x, &y).unwrap();
        assert!((acc - 0.1).abs() < 0.03, "{acc}");
    }

    #[test]
    fn shape_errors() {
        let net = build_mlp(3, &[4], Head::SquaredError, &mut seeded(0)).unwrap();
        assert!(net.predict(&[1.0, 2.0]).is_err());
        assert!(net.loss_and_gradient(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        let bad = Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap();
        assert!(net.forward(&bad).is_err());
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let net = build_conv_net(
            [1, 12, 12],
            &ConvNetSpec {
                kernels: [3, 3],
                channels: [2, 3],
                ..Default::default()
            },
            Head::SoftmaxCrossEntropy(4),
            &mut seeded(9),
        )
        .unwrap();
        let x: Vec<f64> = (0..144).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
