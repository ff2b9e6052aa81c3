//! Desk-scale contrastive target model.
//!
//! Paired vectors `(x, y)` share a Gaussian latent through fixed mixing
//! matrices. A two-tower encoder (one hidden ReLU layer per tower, unit-norm
//! outputs) is trained on the member pool with the symmetric InfoNCE
//! objective until it memorizes, which produces the member/non-member
//! similarity gap the attacks exploit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{EmbeddingVec, FeatureRecord, FeatureSet, MembershipTag, TargetModel};
use crate::num::{axpy, dot, exp, gaussian, gemm, ln, mix_seed, rng_from, sqrt, uniform_sym};

/// Below this, `exp(logit − 1/temperature)` can underflow for a whole row.
pub const MIN_TEMPERATURE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub latent_dim: usize,
    pub input_dim_img: usize,
    pub input_dim_txt: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_train: usize,
    pub n_nonmember_in: usize,
    pub n_nonmember_shift: usize,
    pub noise_std: f64,
    /// Mean offset of the shifted non-member pool, in units of sqrt(input_dim).
    pub shift_scale: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    /// L2 penalty weight α on all encoder parameters.
    pub weight_decay: f64,
    pub train_augment: bool,
    pub k_transforms: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            input_dim_img: 128,
            input_dim_txt: 128,
            hidden_dim: 128,
            embed_dim: 128,
            n_train: 2000,
            n_nonmember_in: 2000,
            n_nonmember_shift: 4000,
            noise_std: 0.7,
            shift_scale: 0.85,
            temperature: 0.2,
            epochs: 200,
            lr: 0.05,
            momentum: 0.0,
            batch: 256,
            weight_decay: 0.0,
            train_augment: false,
            k_transforms: 6,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("latent_dim", self.latent_dim),
            ("input_dim_img", self.input_dim_img),
            ("input_dim_txt", self.input_dim_txt),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("n_train", self.n_train),
            ("n_nonmember_in", self.n_nonmember_in),
            ("n_nonmember_shift", self.n_nonmember_shift),
            ("batch", self.batch),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.embed_dim > self.input_dim_img.min(self.input_dim_txt) {
            return bad(format!("embed_dim {} exceeds an input dim", self.embed_dim));
        }
        if self.batch < 2 {
            return bad("batch must be at least 2".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative".into());
        }
        if !(self.temperature >= MIN_TEMPERATURE && self.lr > 0.0) {
            return bad(format!("temperature must be at least {MIN_TEMPERATURE} and lr positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !self.shift_scale.is_finite() {
            return bad("weight_decay must be non-negative and shift_scale finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pool {
    Member,
    NonMemberIn,
    NonMemberShift,
}

impl Pool {
    pub const ALL: [Pool; 3] = [Pool::Member, Pool::NonMemberIn, Pool::NonMemberShift];

    fn index(self) -> u64 {
        match self {
            Pool::Member => 0,
            Pool::NonMemberIn => 1,
            Pool::NonMemberShift => 2,
        }
    }

    pub fn tag(self) -> MembershipTag {
        match self {
            Pool::Member => MembershipTag::Member,
            _ => MembershipTag::NonMember,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pool::Member => "members",
            Pool::NonMemberIn => "nonmembers_in",
            Pool::NonMemberShift => "nonmembers_shift",
        }
    }

    /// Record ids carry the pool in their upper 32 bits, so pools never collide.
    pub fn id(self, i: usize) -> u64 {
        (self.index() << 32) | i as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawPair {
    pub id: u64,
    pub pool: Pool,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Fixed generative structure shared by all pools of one seed.
///
/// The shifted pool draws its latent from `N(delta, I)` instead of `N(0, I)`;
/// `delta` is scaled so the image-side mean offset `A·delta` has norm
/// `shift_scale · sqrt(input_dim_img)`. Pairs stay aligned through the same
/// mixing matrices, so the shift changes content, not the pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    latent_dim: usize,
    mix_img: Vec<f64>,
    mix_txt: Vec<f64>,
    latent_shift: Vec<f64>,
}

impl Generator {
    pub fn new(cfg: &SimConfig) -> Self {
        let mut rng = rng_from(mix_seed(cfg.seed, 100));
        let scale = 1.0 / sqrt(cfg.latent_dim as f64);
        let mut matrix = |rows: usize| -> Vec<f64> {
            (0..rows * cfg.latent_dim).map(|_| gaussian(&mut rng) * scale).collect()
        };
        let mix_img = matrix(cfg.input_dim_img);
        let mix_txt = matrix(cfg.input_dim_txt);
        let mut gen = Self { latent_dim: cfg.latent_dim, mix_img, mix_txt, latent_shift: vec![0.0; cfg.latent_dim] };
        let dir: Vec<f64> = (0..cfg.latent_dim).map(|_| gaussian(&mut rng)).collect();
        let image_len = crate::num::norm(&gen.image_signal(&dir));
        let target = cfg.shift_scale * sqrt(cfg.input_dim_img as f64);
        if image_len > 0.0 {
            gen.latent_shift = dir.into_iter().map(|v| v * target / image_len).collect();
        }
        gen
    }

    /// `A·z` for the image side.
    pub fn image_signal(&self, z: &[f64]) -> Vec<f64> {
        self.mix_img.chunks_exact(self.latent_dim).map(|row| crate::num::dot(row, z)).collect()
    }

    pub fn text_signal(&self, z: &[f64]) -> Vec<f64> {
        self.mix_txt.chunks_exact(self.latent_dim).map(|row| crate::num::dot(row, z)).collect()
    }

    /// Mean image-side offset of the shifted pool.
    pub fn image_offset(&self) -> Vec<f64> {
        self.image_signal(&self.latent_shift)
    }
}

/// Draws the raw pairs of one pool. Deterministic per `(cfg.seed, pool)`.
pub fn generate_pairs(cfg: &SimConfig, pool: Pool) -> Vec<RawPair> {
    generate_with(&Generator::new(cfg), cfg, pool)
}

pub fn generate_with(gen: &Generator, cfg: &SimConfig, pool: Pool) -> Vec<RawPair> {
    let n = match pool {
        Pool::Member => cfg.n_train,
        Pool::NonMemberIn => cfg.n_nonmember_in,
        Pool::NonMemberShift => cfg.n_nonmember_shift,
    };
    let mut rng = rng_from(mix_seed(cfg.seed, 200 + pool.index()));
    (0..n)
        .map(|i| {
            let mut z: Vec<f64> = (0..cfg.latent_dim).map(|_| gaussian(&mut rng)).collect();
            if pool == Pool::NonMemberShift {
                z.iter_mut().zip(&gen.latent_shift).for_each(|(v, d)| *v += d);
            }
            let mut x = gen.image_signal(&z);
            let mut y = gen.text_signal(&z);
            for v in x.iter_mut().chain(y.iter_mut()) {
                *v += cfg.noise_std * gaussian(&mut rng);
            }
            RawPair { id: pool.id(i), pool, x, y }
        })
        .collect()
}

/// Input-space transformations standing in for image augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    /// Adds N(0, 0.05²) per coordinate.
    AddNoise,
    /// Zeroes floor(0.1·dim) random coordinates.
    Mask,
    /// Rotates by 5° in a random coordinate plane.
    Rotate2D,
    /// Multiplies by 0.9.
    Scale,
    /// Adds a random constant vector of norm 0.1·sqrt(dim).
    Shift,
    /// Negates floor(0.1·dim) random coordinates.
    FlipSign,
    /// Leaves the input unchanged (reference channel).
    Identity,
}

impl TransformKind {
    /// The six-member family used for export channels and training-time augmentation.
    pub const FAMILY: [TransformKind; 6] = [
        TransformKind::AddNoise,
        TransformKind::Mask,
        TransformKind::Rotate2D,
        TransformKind::Scale,
        TransformKind::Shift,
        TransformKind::FlipSign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::AddNoise => "add_noise",
            TransformKind::Mask => "mask",
            TransformKind::Rotate2D => "rotate2d",
            TransformKind::Scale => "scale",
            TransformKind::Shift => "shift",
            TransformKind::FlipSign => "flip_sign",
            TransformKind::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::FAMILY.into_iter().chain([TransformKind::Identity]).find(|k| k.name() == name)
    }

    /// The first `k` channels, cycling through the family.
    pub fn channels(k: usize) -> Vec<TransformKind> {
        (0..k).map(|i| Self::FAMILY[i % Self::FAMILY.len()]).collect()
    }
}

pub fn input_transform(x: &[f64], kind: TransformKind, seed: u64) -> Vec<f64> {
    let mut out = x.to_vec();
    let dim = out.len();
    let mut rng = rng_from(seed);
    let tenth = dim / 10;
    match kind {
        TransformKind::AddNoise => out.iter_mut().for_each(|v| *v += 0.05 * gaussian(&mut rng)),
        TransformKind::Mask => {
            for i in index::sample(&mut rng, dim, tenth) {
                out[i] = 0.0;
            }
        }
        TransformKind::Rotate2D => {
            if dim >= 2 {
                let pair = index::sample(&mut rng, dim, 2);
                let (i, j) = (pair.index(0), pair.index(1));
                let theta = 5.0f64.to_radians();
                let (s, c) = (libm::sin(theta), libm::cos(theta));
                let (a, b) = (out[i], out[j]);
                out[i] = c * a - s * b;
                out[j] = s * a + c * b;
            }
        }
        TransformKind::Scale => out.iter_mut().for_each(|v| *v *= 0.9),
        TransformKind::Shift => {
            let dir: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let len = 0.1 * sqrt(dim as f64) / crate::num::norm(&dir);
            out.iter_mut().zip(dir).for_each(|(v, d)| *v += d * len);
        }
        TransformKind::FlipSign => {
            for i in index::sample(&mut rng, dim, tenth) {
                out[i] = -out[i];
            }
        }
        TransformKind::Identity => {}
    }
    out
}

/// Affine → ReLU → affine → L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// `hidden × in`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `out × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Tower {
    fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden_dim,
            out_dim,
            w1: vec![0.0; hidden_dim * in_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; out_dim * hidden_dim],
            b2: vec![0.0; out_dim],
        }
    }

    fn init<R: Rng>(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut t = Self::zeros(in_dim, hidden_dim, out_dim);
        let b1 = 1.0 / sqrt(in_dim as f64);
        t.w1.iter_mut().chain(t.b1.iter_mut()).for_each(|w| *w = uniform_sym(rng, b1));
        let b2 = 1.0 / sqrt(hidden_dim as f64);
        t.w2.iter_mut().chain(t.b2.iter_mut()).for_each(|w| *w = uniform_sym(rng, b2));
        t
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(self.b2.iter_mut())
    }

    /// Unit-norm embedding of one input.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = TowerCache::default();
        self.forward_batch(x, 1, &mut cache);
        cache.unit
    }

    /// Forward pass over `n` row-major inputs, keeping what backprop needs.
    fn forward_batch(&self, xs: &[f64], n: usize, cache: &mut TowerCache) {
        let (din, dh, de) = (self.in_dim, self.hidden_dim, self.out_dim);
        cache.hidden.clear();
        cache.hidden.resize(n * dh, 0.0);
        gemm(n, din, dh, 1.0, xs, false, &self.w1, true, 0.0, &mut cache.hidden);
        for h in cache.hidden.chunks_exact_mut(dh) {
            for (v, b) in h.iter_mut().zip(&self.b1) {
                *v = (*v + b).max(0.0);
            }
        }
        cache.raw.clear();
        cache.raw.resize(n * de, 0.0);
        gemm(n, dh, de, 1.0, &cache.hidden, false, &self.w2, true, 0.0, &mut cache.raw);
        cache.norms.clear();
        cache.unit.clear();
        for e in cache.raw.chunks_exact_mut(de) {
            e.iter_mut().zip(&self.b2).for_each(|(v, b)| *v += b);
            let norm = sqrt(dot(e, e)).max(f64::MIN_POSITIVE);
            cache.norms.push(norm);
            cache.unit.extend(e.iter().map(|v| v / norm));
        }
    }

    /// Accumulates parameter gradients given `d loss / d unit` for each row.
    fn backward_batch(&self, xs: &[f64], cache: &TowerCache, d_unit: &[f64], grads: &mut Tower) {
        let (din, dh, de) = (self.in_dim, self.hidden_dim, self.out_dim);
        let n = cache.norms.len();
        // Through the normalization: (g − u (u·g)) / |e|.
        let mut d_raw = vec![0.0; n * de];
        for i in 0..n {
            let u = &cache.unit[i * de..(i + 1) * de];
            let g = &d_unit[i * de..(i + 1) * de];
            let ug = dot(u, g);
            for ((dr, &gv), &uv) in d_raw[i * de..(i + 1) * de].iter_mut().zip(g).zip(u) {
                *dr = (gv - uv * ug) / cache.norms[i];
            }
        }
        gemm(de, n, dh, 1.0, &d_raw, true, &cache.hidden, false, 1.0, &mut grads.w2);
        for row in d_raw.chunks_exact(de) {
            axpy(1.0, row, &mut grads.b2);
        }
        let mut d_hidden = vec![0.0; n * dh];
        gemm(n, de, dh, 1.0, &d_raw, false, &self.w2, false, 0.0, &mut d_hidden);
        for (d, h) in d_hidden.iter_mut().zip(&cache.hidden) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        gemm(dh, n, din, 1.0, &d_hidden, true, xs, false, 1.0, &mut grads.w1);
        for row in d_hidden.chunks_exact(dh) {
            axpy(1.0, row, &mut grads.b1);
        }
    }
}

#[derive(Debug, Default)]
struct TowerCache {
    hidden: Vec<f64>,
    raw: Vec<f64>,
    norms: Vec<f64>,
    unit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel {
    pub img: Tower,
    pub txt: Tower,
    pub temperature: f64,
}

impl TwoTowerModel {
    pub fn init(cfg: &SimConfig) -> Self {
        let mut rng = rng_from(mix_seed(cfg.seed, 300));
        let img = Tower::init(cfg.input_dim_img, cfg.hidden_dim, cfg.embed_dim, &mut rng);
        let txt = Tower::init(cfg.input_dim_txt, cfg.hidden_dim, cfg.embed_dim, &mut rng);
        Self { img, txt, temperature: cfg.temperature }
    }

    fn zeroed_like(&self) -> Self {
        Self {
            img: Tower::zeros(self.img.in_dim, self.img.hidden_dim, self.img.out_dim),
            txt: Tower::zeros(self.txt.in_dim, self.txt.hidden_dim, self.txt.out_dim),
            temperature: self.temperature,
        }
    }

    pub fn param_count(&self) -> usize {
        self.img.params().count() + self.txt.params().count()
    }

    /// Image tower parameters then text tower parameters.
    pub fn params(&self) -> Vec<f64> {
        self.img.params().chain(self.txt.params()).copied().collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.img.params_mut().chain(self.txt.params_mut())
    }

    pub fn squared_norm(&self) -> f64 {
        self.img.params().chain(self.txt.params()).map(|v| v * v).sum()
    }

    /// Symmetric InfoNCE over a batch of aligned pairs and its gradient.
    pub fn contrastive_loss_and_grads(&self, pairs: &[(&[f64], &[f64])]) -> Result<(f64, TwoTowerModel)> {
        let b = pairs.len();
        if b < 2 {
            return Err(Error::Config("contrastive batch needs at least 2 pairs".into()));
        }
        let mut xs = Vec::with_capacity(b * self.img.in_dim);
        let mut ys = Vec::with_capacity(b * self.txt.in_dim);
        for (x, y) in pairs {
            if x.len() != self.img.in_dim {
                return Err(Error::DimensionMismatch { expected: self.img.in_dim, actual: x.len() });
            }
            if y.len() != self.txt.in_dim {
                return Err(Error::DimensionMismatch { expected: self.txt.in_dim, actual: y.len() });
            }
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
        }
        let mut grads = self.zeroed_like();
        let loss = self.accumulate_contrastive(&xs, &ys, b, &mut grads);
        Ok((loss, grads))
    }

    /// Contrastive loss plus `alpha · ‖θ‖²`, with gradient.
    pub fn regularized_loss_and_grads(&self, pairs: &[(&[f64], &[f64])], alpha: f64) -> Result<(f64, TwoTowerModel)> {
        let (loss, mut grads) = self.contrastive_loss_and_grads(pairs)?;
        let penalty = alpha * self.squared_norm();
        for (g, p) in grads.params_mut().zip(self.params()) {
            *g += 2.0 * alpha * p;
        }
        Ok((loss + penalty, grads))
    }

    fn accumulate_contrastive(&self, xs: &[f64], ys: &[f64], b: usize, grads: &mut TwoTowerModel) -> f64 {
        let de = self.img.out_dim;
        let mut ci = TowerCache::default();
        let mut ct = TowerCache::default();
        self.img.forward_batch(xs, b, &mut ci);
        self.txt.forward_batch(ys, b, &mut ct);
        let inv_t = 1.0 / self.temperature;

        let mut logits = vec![0.0; b * b];
        gemm(b, de, b, inv_t, &ci.unit, false, &ct.unit, true, 0.0, &mut logits);

        // Logits are bounded by 1/temperature, so one shared shift keeps every
        // exponential in range and lets rows and columns reuse them.
        let mut expo: Vec<f64> = logits.iter().map(|l| exp(l - inv_t)).collect();
        let mut row_sum = vec![0.0; b];
        let mut col_sum = vec![0.0; b];
        for (i, row) in expo.chunks_exact(b).enumerate() {
            row_sum[i] = row.iter().sum();
            axpy(1.0, row, &mut col_sum);
        }
        let mut loss = 0.0;
        for i in 0..b {
            let diag = logits[i * b + i];
            loss += (inv_t + ln(row_sum[i]) - diag) + (inv_t + ln(col_sum[i]) - diag);
        }
        let half_inv_b = 0.5 / b as f64;
        loss *= half_inv_b;

        // d loss / d logits = ½ (softmax_rows + softmax_cols − 2I) / B
        for (i, row) in expo.chunks_exact_mut(b).enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                let mut g = *e / row_sum[i] + *e / col_sum[j];
                if i == j {
                    g -= 2.0;
                }
                *e = g * half_inv_b;
            }
        }
        let d_logits = expo;

        let mut d_u = vec![0.0; b * de];
        let mut d_v = vec![0.0; b * de];
        gemm(b, b, de, inv_t, &d_logits, false, &ct.unit, false, 0.0, &mut d_u);
        gemm(b, b, de, inv_t, &d_logits, true, &ci.unit, false, 0.0, &mut d_v);
        self.img.backward_batch(xs, &ci, &d_u, &mut grads.img);
        self.txt.backward_batch(ys, &ct, &d_v, &mut grads.txt);
        loss
    }
}

impl TargetModel for TwoTowerModel {
    type Image = [f64];
    type Text = [f64];

    fn embed_image(&self, image: &[f64]) -> EmbeddingVec {
        EmbeddingVec::from_f64(&self.img.embed(image)).expect("tower output is finite")
    }

    fn embed_text(&self, text: &[f64]) -> EmbeddingVec {
        EmbeddingVec::from_f64(&self.txt.embed(text)).expect("tower output is finite")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Mean batch loss per epoch, excluding the L2 penalty.
    pub epoch_losses: Vec<f64>,
    /// Mean batch loss of the initial parameters over one pass.
    pub initial_loss: f64,
}

impl TrainSummary {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Trains the target on the member pool of `cfg`.
pub fn train_target(cfg: &SimConfig) -> Result<(TwoTowerModel, TrainSummary)> {
    cfg.validate()?;
    let members = generate_pairs(cfg, Pool::Member);
    train_on(cfg, &members)
}

pub fn train_on(cfg: &SimConfig, members: &[RawPair]) -> Result<(TwoTowerModel, TrainSummary)> {
    cfg.validate()?;
    let mut model = TwoTowerModel::init(cfg);
    let mut order: Vec<usize> = (0..members.len()).collect();
    let mut rng = rng_from(mix_seed(cfg.seed, 400));
    let mut aug_rng = rng_from(mix_seed(cfg.seed, 401));
    let mut velocity = vec![0.0; model.param_count()];

    let batches = |order: &[usize]| -> Vec<Vec<usize>> {
        // A trailing single pair cannot form a contrastive batch.
        order.chunks(cfg.batch).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
    };

    let mut initial = 0.0;
    let init_batches = batches(&order);
    for idx in &init_batches {
        let pairs: Vec<(&[f64], &[f64])> = idx.iter().map(|&i| (&members[i].x[..], &members[i].y[..])).collect();
        initial += model.contrastive_loss_and_grads(&pairs)?.0;
    }
    let initial_loss = initial / init_batches.len().max(1) as f64;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut augmented: Vec<Vec<f64>> = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let epoch_batches = batches(&order);
        for (bi, idx) in epoch_batches.iter().enumerate() {
            if cfg.train_augment {
                augmented.clear();
                for &i in idx {
                    let kind = TransformKind::FAMILY[aug_rng.random_range(0..TransformKind::FAMILY.len())];
                    augmented.push(input_transform(&members[i].x, kind, aug_rng.random()));
                }
            }
            let pairs: Vec<(&[f64], &[f64])> = idx
                .iter()
                .enumerate()
                .map(|(n, &i)| {
                    let x = if cfg.train_augment { &augmented[n][..] } else { &members[i].x[..] };
                    (x, &members[i].y[..])
                })
                .collect();
            let (loss, grads) = model.contrastive_loss_and_grads(&pairs)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            total += loss;
            let alpha = cfg.weight_decay;
            let params = model.params();
            for (((p, v), g), p0) in model.params_mut().zip(velocity.iter_mut()).zip(grads.params()).zip(params) {
                *v = cfg.momentum * *v - cfg.lr * (g + 2.0 * alpha * p0);
                *p += *v;
            }
        }
        epoch_losses.push(total / epoch_batches.len().max(1) as f64);
    }
    Ok((model, TrainSummary { epoch_losses, initial_loss }))
}

/// Queries the model for every pair, adding one transformed-image channel
/// per entry of `channels`. Transform randomness is seeded per record id and
/// channel index.
pub fn export_features(
    model: &TwoTowerModel,
    pairs: &[RawPair],
    channels: &[TransformKind],
    seed: u64,
) -> Result<FeatureSet> {
    let records = pairs.iter().map(|p| export_record(model, p, channels, seed)).collect();
    let names = channels.iter().map(|k| String::from(k.name())).collect();
    FeatureSet::new(model.img.out_dim, model.txt.out_dim, names, records)
}

pub fn export_record(model: &TwoTowerModel, pair: &RawPair, channels: &[TransformKind], seed: u64) -> FeatureRecord {
    let transformed = channels
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let t_seed = mix_seed(mix_seed(seed, pair.id), 500 + k as u64);
            model.embed_image(&input_transform(&pair.x, kind, t_seed))
        })
        .collect();
    FeatureRecord::new(pair.id, pair.pool.tag(), model.embed_image(&pair.x), model.embed_text(&pair.y))
        .with_transformed(transformed)
}

/// Mean image-text cosine similarity per pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsSummary {
    pub members: f64,
    pub nonmembers_in: f64,
    pub nonmembers_shift: f64,
}

/// Everything one simulator run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub config: SimConfig,
    pub model: TwoTowerModel,
    pub training: TrainSummary,
    pub members: FeatureSet,
    pub nonmembers_in: FeatureSet,
    pub nonmembers_shift: FeatureSet,
}

impl SimRun {
    pub fn pool(&self, pool: Pool) -> &FeatureSet {
        match pool {
            Pool::Member => &self.members,
            Pool::NonMemberIn => &self.nonmembers_in,
            Pool::NonMemberShift => &self.nonmembers_shift,
        }
    }

    /// Both non-member pools as one set.
    pub fn nonmembers(&self) -> Result<FeatureSet> {
        FeatureSet::concat(&[&self.nonmembers_in, &self.nonmembers_shift])
    }

    pub fn cs_summary(&self) -> Result<CsSummary> {
        let mean = |s: &FeatureSet| -> Result<f64> {
            let cs = crate::similarity::batch_cs(s)?;
            Ok(cs.scores.iter().sum::<f64>() / cs.len().max(1) as f64)
        };
        Ok(CsSummary {
            members: mean(&self.members)?,
            nonmembers_in: mean(&self.nonmembers_in)?,
            nonmembers_shift: mean(&self.nonmembers_shift)?,
        })
    }
}

/// Generates all pools, trains the target on members and exports features.
pub fn simulate(cfg: &SimConfig) -> Result<SimRun> {
    cfg.validate()?;
    let gen = Generator::new(cfg);
    let pools: Vec<Vec<RawPair>> = Pool::ALL.iter().map(|&p| generate_with(&gen, cfg, p)).collect();
    let (model, training) = train_on(cfg, &pools[0])?;
    let channels = TransformKind::channels(cfg.k_transforms);
    let export_seed = mix_seed(cfg.seed, 600);
    let mut sets = pools
        .iter()
        .zip(Pool::ALL)
        .map(|(pairs, pool)| {
            Ok(export_features(&model, pairs, &channels, export_seed)?
                .with_meta("dataset", format!("simulator/{}", pool.name()))
                .with_meta("model", "two-tower-mlp"))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(SimRun {
        config: cfg.clone(),
        model,
        training,
        members: sets.next().unwrap(),
        nonmembers_in: sets.next().unwrap(),
        nonmembers_shift: sets.next().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimConfig {
        SimConfig {
            latent_dim: 3,
            input_dim_img: 6,
            input_dim_txt: 5,
            hidden_dim: 4,
            embed_dim: 3,
            n_train: 12,
            n_nonmember_in: 5,
            n_nonmember_shift: 5,
            epochs: 3,
            batch: 4,
            k_transforms: 2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn noiseless_pairs_are_determined_by_latent() {
        let cfg = SimConfig { noise_std: 0.0, ..tiny() };
        let gen = Generator::new(&cfg);
        let pairs = generate_with(&gen, &cfg, Pool::Member);
        // Recover nothing about z directly, but two generators with the same
        // seed must agree on every coordinate.
        assert_eq!(pairs, generate_pairs(&cfg, Pool::Member));
        let z = [0.5, -1.0, 2.0];
        let x = gen.image_signal(&z);
        assert_eq!(x.len(), 6);
        assert_eq!(gen.image_signal(&z), x);
    }

    #[test]
    fn pools_do_not_share_pairs() {
        let cfg = tiny();
        let m = generate_pairs(&cfg, Pool::Member);
        let n = generate_pairs(&cfg, Pool::NonMemberIn);
        assert!(m.iter().all(|a| n.iter().all(|b| a.x != b.x)));
        assert!(m.iter().all(|a| n.iter().all(|b| a.id != b.id)));
    }

    #[test]
    fn scale_and_identity_transforms() {
        let x = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(input_transform(&x, TransformKind::Scale, 1), x.iter().map(|v| 0.9 * v).collect::<Vec<_>>());
        assert_eq!(input_transform(&x, TransformKind::Identity, 1), x.to_vec());
    }

    #[test]
    fn rotation_preserves_norm() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        for seed in 0..10 {
            let r = input_transform(&x, TransformKind::Rotate2D, seed);
            assert!((crate::num::norm(&r) - crate::num::norm(&x)).abs() < 1e-9);
            assert_ne!(r, x);
        }
    }

    #[test]
    fn mask_zeroes_a_tenth() {
        let x = vec![1.0; 64];
        for seed in 0..5 {
            let m = input_transform(&x, TransformKind::Mask, seed);
            assert_eq!(m.iter().filter(|v| **v == 0.0).count(), 6);
            let f = input_transform(&x, TransformKind::FlipSign, seed);
            assert_eq!(f.iter().filter(|v| **v < 0.0).count(), 6);
        }
    }

    #[test]
    fn shift_has_fixed_norm() {
        let x = vec![0.0; 25];
        let s = input_transform(&x, TransformKind::Shift, 3);
        assert!((crate::num::norm(&s) - 0.5).abs() < 1e-12);
        assert_eq!(s, input_transform(&x, TransformKind::Shift, 3));
    }

    #[test]
    fn encoder_outputs_unit_norm() {
        let model = TwoTowerModel::init(&tiny());
        for p in generate_pairs(&tiny(), Pool::NonMemberShift) {
            let u = model.img.embed(&p.x);
            assert!((crate::num::norm(&u) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_logits_give_ln_b() {
        let model = TwoTowerModel::init(&tiny());
        let x = [0.3, -0.1, 0.8, 1.0, 0.0, 0.5];
        let y = [0.2, 0.2, -0.4, 0.1, 0.9];
        let pairs = vec![(&x[..], &y[..]); 5];
        let (loss, _) = model.contrastive_loss_and_grads(&pairs).unwrap();
        assert!((loss - libm::log(5.0)).abs() < 1e-12);
    }

    #[test]
    fn export_shapes_and_tags() {
        let cfg = tiny();
        let run = simulate(&cfg).unwrap();
        assert_eq!(run.members.len(), 12);
        assert_eq!(run.members.k_transforms(), 2);
        assert!(run.members.records().iter().all(|r| r.tag == MembershipTag::Member));
        assert!(run.nonmembers_shift.records().iter().all(|r| r.tag == MembershipTag::NonMember));

        let pairs = generate_pairs(&cfg, Pool::Member);
        let none = export_features(&run.model, &pairs, &[], 0).unwrap();
        assert!(none.records().iter().all(|r| r.transformed.is_empty()));
        let ident = export_features(&run.model, &pairs, &[TransformKind::Identity], 0).unwrap();
        assert!(ident.records().iter().all(|r| r.transformed[0] == r.img));
    }

    #[test]
    fn simulate_is_deterministic() {
        assert_eq!(simulate(&tiny()).unwrap(), simulate(&tiny()).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SimConfig { embed_dim: 100, ..tiny() }.validate().is_err());
        assert!(SimConfig { batch: 1, ..tiny() }.validate().is_err());
        assert!(SimConfig { n_train: 0, ..tiny() }.validate().is_err());
    }
}
