//! Feed-forward membership classifier with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the single output unit a logistic sigmoid. All
//! parameters are `f64`; training is single-threaded and fully determined by
//! [`TrainConfig::seed`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::attacks::AttackExample;
use crate::error::{Error, Result};
use crate::num::{axpy, dot, ln, mix_seed, rng_from, sigmoid, sqrt, uniform_sym};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-12;

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 64];

/// One affine layer, weights row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim] }
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim).zip(&self.biases)) {
            *o = b + dot(row, input);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackNet {
    layers: Vec<Layer>,
}

/// Gradients share the network's parameter layout.
pub type Gradients = AttackNet;

impl AttackNet {
    /// All-zero parameters for `layer_dims = [d_in, h1, ..., 1]`.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers })
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_dims)?;
        let mut rng = rng_from(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / sqrt(layer.in_dim as f64);
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = uniform_sym(&mut rng, bound);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from explicit layers, checking shapes and finiteness.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("attack net needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::Config(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Config(format!("layer {i} parameter count does not match its shape")));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(Error::Config(format!("layer {i} input does not match layer {} output", i - 1)));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers.last().map(|l| l.out_dim) != Some(1) {
            return Err(Error::Config("attack net must end in a single output unit".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Member probability for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        self.check_input(features.len())?;
        let mut scratch = Scratch::new(self);
        Ok(self.forward_cached(features, &mut scratch))
    }

    /// Mean binary cross-entropy over `batch` and its exact gradient.
    pub fn loss_and_grads(&self, batch: &[AttackExample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Empty("loss needs a non-empty batch"));
        }
        let mut grads = self.zeroed_like();
        let mut scratch = Scratch::new(self);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            self.check_input(ex.features.len())?;
            loss += self.backprop(&ex.features, ex.label, scale, &mut scratch, &mut grads);
        }
        Ok((loss * scale, grads))
    }

    /// Mean loss and accuracy at the 0.5 cutoff, without gradients.
    pub fn evaluate(&self, examples: &[AttackExample]) -> Result<(f64, f64)> {
        if examples.is_empty() {
            return Err(Error::Empty("nothing to evaluate"));
        }
        let mut scratch = Scratch::new(self);
        let (mut loss, mut correct) = (0.0, 0usize);
        for ex in examples {
            self.check_input(ex.features.len())?;
            let p = self.forward_cached(&ex.features, &mut scratch);
            loss += bce(p, ex.label);
            if (p >= 0.5) == (ex.label == 1) {
                correct += 1;
            }
        }
        let n = examples.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: dim });
        }
        Ok(())
    }

    fn zeroed_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect() }
    }

    /// Fills `scratch.acts` with post-activation outputs (the last entry is
    /// the pre-sigmoid logit) and returns the probability.
    fn forward_cached(&self, input: &[f64], scratch: &mut Scratch) -> f64 {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = scratch.acts.split_at_mut(i);
            let src: &[f64] = if i == 0 { input } else { &done[i - 1] };
            let out = &mut rest[0];
            layer.affine(src, out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        sigmoid(scratch.acts[last][0])
    }

    /// Adds `scale ×` this example's gradient into `grads`; returns its loss.
    fn backprop(&self, input: &[f64], label: u8, scale: f64, scratch: &mut Scratch, grads: &mut Gradients) -> f64 {
        let p = self.forward_cached(input, scratch);
        let b = f64::from(label);
        let loss = bce(p, b as u8);
        // d loss / d logit; zero where the clamp is active.
        let dlogit = if p > P_CLAMP && p < 1.0 - P_CLAMP { p - b } else { 0.0 };

        let last = self.layers.len() - 1;
        scratch.deltas[last][0] = dlogit * scale;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let (lower, upper) = scratch.deltas.split_at_mut(i);
            let delta = &upper[0];
            let src: &[f64] = if i == 0 { input } else { &scratch.acts[i - 1] };
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                axpy(d, src, &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim]);
            }
            if i > 0 {
                let prev = &mut lower[i - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    axpy(d, &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim], prev);
                }
                // ReLU: an output of exactly zero means the unit was inactive.
                for (pv, a) in prev.iter_mut().zip(&scratch.acts[i - 1]) {
                    if *a <= 0.0 {
                        *pv = 0.0;
                    }
                }
            }
        }
        loss
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Config(format!("invalid layer dims {dims:?}")));
    }
    if dims[dims.len() - 1] != 1 {
        return Err(Error::Config(format!("layer dims {dims:?} must end in 1")));
    }
    Ok(())
}

fn bce(p: f64, label: u8) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if label == 1 {
        -ln(p)
    } else {
        -ln(1.0 - p)
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(net: &AttackNet) -> Self {
        let acts: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
        Self { deltas: acts.clone(), acts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Lower bound on mini-batches per epoch. Small datasets get a smaller
    /// batch so that every epoch still takes this many optimizer steps.
    pub min_batches: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            min_batches: 16,
            epochs: 100,
            holdout_fraction: 0.1,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.min_batches == 0 || self.epochs == 0 || self.patience == 0 {
            return bad("batch_size, min_batches, epochs and patience must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5) {
            return bad("holdout_fraction must lie in (0, 0.5]");
        }
        Ok(())
    }
}

/// One line of the training log. Epoch 0 describes the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: f64,
    pub holdout_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest held-out loss seen, including epoch 0.
    pub net: AttackNet,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Mini-batch SGD with momentum and early stopping on a held-out split.
pub fn train(examples: &[AttackExample], cfg: &TrainConfig, hidden: &[usize]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if examples.len() < 2 {
        return Err(Error::TooFewScores { required: 2, actual: examples.len() });
    }
    let positives = examples.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass { members: positives, non_members: examples.len() - positives });
    }
    let d_in = examples[0].features.len();
    if let Some(e) = examples.iter().find(|e| e.features.len() != d_in) {
        return Err(Error::DimensionMismatch { expected: d_in, actual: e.features.len() });
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng_from(mix_seed(cfg.seed, 3)));
    let n_hold = (libm::ceil(cfg.holdout_fraction * examples.len() as f64) as usize).clamp(1, examples.len() - 1);
    let holdout: Vec<AttackExample> = order[..n_hold].iter().map(|&i| examples[i].clone()).collect();
    let mut train_set: Vec<AttackExample> = order[n_hold..].iter().map(|&i| examples[i].clone()).collect();

    let batch_size = cfg.batch_size.min(train_set.len().div_ceil(cfg.min_batches)).max(1);

    let mut dims = vec![d_in];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let mut net = AttackNet::init(&dims, mix_seed(cfg.seed, 1))?;
    let mut velocity: Vec<f64> = vec![0.0; net.param_count()];
    let mut shuffle_rng = rng_from(mix_seed(cfg.seed, 2));

    let log_line = |net: &AttackNet, epoch: usize, train_set: &[AttackExample]| -> Result<EpochLog> {
        let (train_loss, _) = net.evaluate(train_set)?;
        let (holdout_loss, holdout_acc) = net.evaluate(&holdout)?;
        Ok(EpochLog { epoch, train_loss, holdout_loss, holdout_acc })
    };

    let first = log_line(&net, 0, &train_set)?;
    let mut log = vec![first];
    let mut best = (first.holdout_loss, 0usize, net.clone());
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        train_set.shuffle(&mut shuffle_rng);
        for batch in train_set.chunks(batch_size) {
            let (_, grads) = net.loss_and_grads(batch)?;
            for ((p, v), g) in net.params_mut().zip(velocity.iter_mut()).zip(grads.params()) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        let line = log_line(&net, epoch, &train_set)?;
        log.push(line);
        if !line.train_loss.is_finite() {
            break;
        }
        if line.holdout_loss < best.0 {
            best = (line.holdout_loss, epoch, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome { net: best.2, best_epoch: best.1, log, stopped_early })
}
