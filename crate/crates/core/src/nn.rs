//! Fully connected feed-forward classifier trained with plain SGD.
//!
//! Hidden layers use ReLU; the output layer is a softmax over two logits,
//! index 0 = non-match, index 1 = match. The loss is the negative log
//! likelihood of the log-softmax, computed with max subtraction. Everything
//! runs in f64 and single-threaded so training is reproducible bit for bit.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dataset::{Dataset, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Input, three hidden layers, output.
pub const DNN_BUDDIES_SHAPE: [usize; 5] = [FEATURE_LEN, 100, 100, 100, 2];

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs × inputs`, row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (o, row) in self.weights.chunks_exact(self.inputs).enumerate() {
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(self.biases[o] + dot);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Weight initialization for [`Network::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitRule {
    /// Normal with std `sqrt(2 / fan_in)`, zero biases.
    He,
    Zeros,
}

impl Network {
    pub fn new(shape: &[usize], init: InitRule, seed: u64) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::invalid(format!("bad layer shape {shape:?}")));
        }
        let mut rng = SeededRng::new(seed);
        let layers = shape
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let scale = (2.0 / inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| match init {
                        InitRule::He => rng.normal() * scale,
                        InitRule::Zeros => 0.0,
                    })
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Network { layers })
    }

    /// The 336-100-100-100-2 edge-pair classifier.
    pub fn dnn_buddies(seed: u64) -> Self {
        Network::new(&DNN_BUDDIES_SHAPE, InitRule::He, seed).expect("valid shape")
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "expected {} inputs, got {}",
                self.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Output logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// `(p_nonmatch, p_match)` for a two-output network.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.probabilities(x)?;
        if p.len() != 2 {
            return Err(Error::invalid("forward needs a two-output network"));
        }
        Ok((p[0], p[1]))
    }

    /// Single-sample NLL loss.
    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        let z = self.logits(x)?;
        Ok(nll(&z, label))
    }

    /// Loss and gradient of every parameter for one sample, in the same flat
    /// order as [`Network::parameters`].
    pub fn loss_and_gradient(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let mut grads = Gradients::zeros(self);
        let mut scratch = Scratch::default();
        let loss = self.backprop(x, label, &mut grads, &mut scratch);
        Ok((loss, grads.flat()))
    }

    /// All weights and biases, layer by layer (weights then biases).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights[i] = value;
                return;
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                l.biases[i] = value;
                return;
            }
            i -= l.biases.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Accumulates gradients of one sample into `grads`; returns its loss.
    fn backprop(&self, x: &[f64], label: usize, grads: &mut Gradients, s: &mut Scratch) -> f64 {
        let n = self.layers.len();
        s.acts.resize(n + 1, Vec::new());
        s.acts[0].clear();
        s.acts[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.acts.split_at_mut(i + 1);
            layer.forward(&before[i], &mut after[0]);
            if i != n - 1 {
                after[0].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let logits = &s.acts[n];
        let loss = nll(logits, label);
        s.delta.clear();
        s.delta.extend(softmax(logits));
        s.delta[label] -= 1.0;

        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let input = &s.acts[i];
            let (gw, gb) = grads.layer_mut(i);
            s.prev.clear();
            s.prev.resize(layer.inputs, 0.0);
            for (o, row) in layer.weights.chunks_exact(layer.inputs).enumerate() {
                let d = s.delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for ((g, v), (p, w)) in grow.iter_mut().zip(input).zip(s.prev.iter_mut().zip(row)) {
                    *g += d * v;
                    *p += w * d;
                }
            }
            if i > 0 {
                // ReLU derivative; activations are post-ReLU, so zero means inactive.
                for (p, a) in s.prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            std::mem::swap(&mut s.delta, &mut s.prev);
        }
        loss
    }

    fn apply(&mut self, grads: &Gradients, step: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in l.weights.iter_mut().zip(gw) {
                *w -= step * g;
            }
            for (b, g) in l.biases.iter_mut().zip(gb) {
                *b -= step * g;
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn nll(z: &[f64], label: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Default)]
struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = &mut self.layers[i];
        (w, b)
    }

    fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init: InitRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            init: InitRule::He,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub loss: f64,
    /// Accuracy of the online predictions made during the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,loss,train_acc,val_acc")?;
        for e in &self.epochs {
            let val = e.val_acc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", e.epoch, e.loss, e.train_acc, val)?;
        }
        Ok(())
    }
}

fn to_f64(features: &[f32]) -> Vec<f64> {
    features.iter().map(|&v| v as f64).collect()
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let mut correct = 0usize;
    for s in &data.samples {
        let (p0, p1) = net.forward(&to_f64(&s.features))?;
        if (p1 > p0) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch SGD. Samples are reshuffled every epoch from a generator seeded
/// with `cfg.seed`; each step moves along the mean batch gradient.
pub fn train(
    net: &mut Network,
    data: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if net.shape().last() != Some(&2) {
        return Err(Error::invalid("training needs a two-output network"));
    }
    let inputs: Vec<Vec<f64>> = data
        .samples
        .iter()
        .map(|s| {
            if s.features.len() != net.input_len() {
                return Err(Error::invalid(format!(
                    "sample has {} features, network expects {}",
                    s.features.len(),
                    net.input_len()
                )));
            }
            Ok(to_f64(&s.features))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = data.samples.iter().map(|s| s.label as usize).collect();

    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut grads = Gradients::zeros(net);
    let mut scratch = Scratch::default();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += net.backprop(&inputs[i], labels[i], &mut grads, &mut scratch);
                let z = &scratch.acts[net.layers.len()];
                let predicted = (z[1] > z[0]) as usize;
                correct += (predicted == labels[i]) as usize;
            }
            net.apply(&grads, cfg.learning_rate / batch.len() as f64);
            loss_sum += batch_loss / batch.len() as f64;
            batches += 1;
        }
        let val_acc = validation
            .filter(|v| !v.is_empty())
            .map(|v| accuracy(net, v))
            .transpose()?;
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / batches as f64,
            train_acc: correct as f64 / inputs.len() as f64,
            val_acc,
        });
    }
    Ok(log)
}

/// Maximum relative error between backpropagated gradients and central
/// finite differences of the single-sample loss, over every parameter.
/// Where both magnitudes are below `1e-8` the absolute difference is used.
pub fn gradient_check(net: &Network, x: &[f64], label: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let (_, analytic) = net.loss_and_gradient(x, label)?;
    let params = net.parameters();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, (&p, &g)) in params.iter().zip(&analytic).enumerate() {
        probe.set_parameter(i, p + epsilon);
        let up = probe.loss(x, label)?;
        probe.set_parameter(i, p - epsilon);
        let down = probe.loss(x, label)?;
        probe.set_parameter(i, p);
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(g, numeric));
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DNNW";
pub const WEIGHTS_VERSION: u32 = 1;

impl Network {
    /// Magic `DNNW`, version u32, layer count u32, the layer sizes as u32,
    /// then per layer the row-major weights and the biases as f64, all
    /// little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.parameter_count() * 8);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for s in self.shape() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a weights file of any layer shape.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::format("not a weights file"));
        }
        let version = r.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::format(format!("unsupported weights version {version}")));
        }
        let count = r.u32()? as usize;
        if count == 0 || count > 64 {
            return Err(Error::format(format!("implausible layer count {count}")));
        }
        let shape: Vec<usize> = (0..=count).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        if shape.contains(&0) {
            return Err(Error::format("zero-width layer"));
        }
        let params: usize = shape
            .windows(2)
            .try_fold(0usize, |acc, w| w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc))
            .ok_or_else(|| Error::format("layer sizes overflow"))?;
        if params.checked_mul(8) != Some(bytes.len() - r.pos) {
            return Err(Error::format("weights length does not match layer shape"));
        }
        let mut layers = Vec::with_capacity(count);
        for w in shape.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let weights = (0..inputs * outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let biases = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
                return Err(Error::format("non-finite parameter"));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                biases,
            });
        }
        Ok(Network { layers })
    }

    /// Decodes and checks the layer shape.
    pub fn decode_with_shape(bytes: &[u8], expected: &[usize]) -> Result<Self> {
        let net = Network::decode(bytes)?;
        if net.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                found: net.shape(),
            });
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    /// Loads a 336-100-100-100-2 classifier.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::decode_with_shape(&std::fs::read(path)?, &DNN_BUDDIES_SHAPE)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("truncated weights file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EdgePairSample;

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| rng.normal()).collect()
    }

    pub(crate) fn toy_set(n: usize, dim: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| {
                    let label = i % 2 == 0;
                    let v = if label { 1.0 } else { -1.0 };
                    EdgePairSample { features: vec![v; dim], label, provenance: None }
                })
                .collect(),
        )
    }

    #[test]
    fn shape_chain() {
        let net = Network::dnn_buddies(0);
        assert_eq!(net.shape(), vec![336, 100, 100, 100, 2]);
        assert_eq!(net.parameter_count(), 336 * 100 + 100 + 2 * (100 * 100 + 100) + 100 * 2 + 2);
    }

    #[test]
    fn outputs_are_a_distribution() {
        let net = Network::dnn_buddies(1);
        for seed in 0..10 {
            let (a, b) = net.forward(&random_input(336, seed)).unwrap();
            assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            assert!((a + b - 1.0).abs() < 1e-9);
        }
        assert!(net.forward(&[0.0; 10]).is_err());
    }

    #[test]
    fn zero_network_is_indifferent() {
        let net = Network::new(&DNN_BUDDIES_SHAPE, InitRule::Zeros, 0).unwrap();
        assert_eq!(net.forward(&random_input(336, 2)).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn forward_is_reproducible() {
        let x = random_input(336, 3);
        let a = Network::dnn_buddies(9).forward(&x).unwrap();
        let b = Network::dnn_buddies(9).forward(&x).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1001.0]);
        assert!((p[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert!((nll(&[1000.0, 0.0], 1) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let net = Network::new(&[12, 8, 8, 8, 2], InitRule::He, seed).unwrap();
            let x = random_input(12, 100 + seed);
            let err = gradient_check(&net, &x, (seed % 2) as usize, 1e-5).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn dead_units_have_zero_gradient_both_ways() {
        let mut net = Network::new(&[4, 3, 2], InitRule::He, 5).unwrap();
        // Force hidden unit 0 off: large negative bias.
        net.set_parameter(12, -100.0);
        let x = random_input(4, 6);
        let (_, g) = net.loss_and_gradient(&x, 1).unwrap();
        assert!(g[..4].iter().all(|&v| v == 0.0));
        assert!(gradient_check(&net, &x, 1, 1e-5).unwrap() < 1e-6);
        assert_eq!(relative_error(1e-10, 0.0), 1e-10);
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let mut net = Network::new(&[6, 5, 2], InitRule::He, 1).unwrap();
        let before = net.clone();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 4, ..Default::default() };
        train(&mut net, &toy_set(20, 6), None, &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn learns_separable_toy_set() {
        let data = toy_set(200, 336);
        let mut net = Network::dnn_buddies(3);
        let cfg = TrainConfig { epochs: 20, seed: 1, ..Default::default() };
        let log = train(&mut net, &data, Some(&data), &cfg).unwrap();
        assert!(accuracy(&net, &data).unwrap() >= 0.99);
        for w in log.epochs.windows(2).skip(1) {
            assert!(w[1].loss <= w[0].loss, "{:?}", log.epochs);
        }
        let mut csv = Vec::new();
        log.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 21);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_set(40, 8);
        let cfg = TrainConfig { epochs: 3, batch_size: 7, seed: 4, ..Default::default() };
        let mut a = Network::new(&[8, 6, 2], InitRule::He, 2).unwrap();
        let mut b = a.clone();
        train(&mut a, &data, None, &cfg).unwrap();
        train(&mut b, &data, None, &cfg).unwrap();
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn weights_roundtrip_and_errors() {
        let net = Network::dnn_buddies(7);
        let bytes = net.encode();
        let back = Network::decode_with_shape(&bytes, &DNN_BUDDIES_SHAPE).unwrap();
        for seed in 0..100 {
            let x = random_input(336, seed);
            assert_eq!(net.forward(&x).unwrap(), back.forward(&x).unwrap());
        }
        assert!(matches!(Network::decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Network::decode(&bytes[..10]), Err(Error::Format(_))));
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(Network::decode(&nan), Err(Error::Format(_))));
        let other = Network::new(&[336, 50, 2], InitRule::He, 0).unwrap().encode();
        assert!(matches!(
            Network::decode_with_shape(&other, &DNN_BUDDIES_SHAPE),
            Err(Error::ShapeMismatch { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        net.save(&path).unwrap();
        assert_eq!(Network::load(&path).unwrap(), net);
    }
}
