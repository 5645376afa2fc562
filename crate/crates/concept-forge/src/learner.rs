//! Contrastive recovery of concept coordinates: an encoder h maps
//! observations to n outputs, and per-environment heads score
//! g_e(x) = alpha^e - sum_k (beta^e_k h_k)^2 + sum_k gamma^e_k h_k
//! against the balanced logistic loss between that environment's data
//! (label 1) and base data (label 0), plus an L1 penalty on beta.
//! Backpropagation is written out by hand; the optimizer is Adam with one
//! learning rate for the heads and one for the encoder, both cosine-annealed
//! per optimizer step — either once over the whole run or cyclically
//! (warm restarts).

use crate::error::{ForgeError, Result};
use crate::rng;
use crate::sampler::Dataset;
use crate::world::{leaky_relu, LEAKY_SLOPE};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const ENCODER_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMode {
    KnownStructure,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out x in.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Hidden-layer nonlinearity of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu => leaky_relu(v, LEAKY_SLOPE),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative as a function of the post-activation value. Both supported
    /// nonlinearities admit this form, which spares storing pre-activations.
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if a < 0.0 {
                    LEAKY_SLOPE
                } else {
                    1.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Encoder network. All layers but the last apply the activation; linear
/// mode is the single-layer special case.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderMlp {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

impl EncoderMlp {
    pub fn d_x(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn n(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    fn init(
        kind: EncoderKind,
        activation: Activation,
        d_x: usize,
        n: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let dims: Vec<usize> = match kind {
            EncoderKind::Linear => vec![d_x, n],
            EncoderKind::Mlp => vec![d_x, ENCODER_HIDDEN, ENCODER_HIDDEN, n],
        };
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    (rng.random::<f64>() * 2.0 - 1.0) * bound
                });
                let b = Array1::from_shape_fn(fan_out, |_| {
                    (rng.random::<f64>() * 2.0 - 1.0) * bound
                });
                DenseLayer { w, b }
            })
            .collect();
        EncoderMlp { layers, activation }
    }

    /// Returns the post-activation output of every layer; the last entry is
    /// the encoding h.
    fn forward_full(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.w.t());
            for mut row in z.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += layer.b[j];
                    if l + 1 < self.layers.len() {
                        *v = self.activation.apply(*v);
                    }
                }
            }
            acts.push(z.clone());
            current = z;
        }
        acts
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_full(x).pop().unwrap()
    }
}

/// One environment's classification head over its atom slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub alpha: f64,
    pub beta: Array1<f64>,
    pub gamma: Array1<f64>,
    /// Encoder output indices this head reads.
    pub slots: Vec<usize>,
}

impl Head {
    fn new(slots: Vec<usize>) -> Self {
        let k = slots.len();
        Head {
            alpha: 0.0,
            beta: Array1::ones(k),
            gamma: Array1::zeros(k),
            slots,
        }
    }

    fn logit(&self, h: ArrayView1<f64>) -> f64 {
        let mut g = self.alpha;
        for (k, &slot) in self.slots.iter().enumerate() {
            let v = h[slot];
            let bv = self.beta[k] * v;
            g += -bv * bv + self.gamma[k] * v;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderMlp,
    pub heads: Vec<Head>,
}

impl Model {
    pub fn n(&self) -> usize {
        self.encoder.n()
    }

    pub fn m(&self) -> usize {
        self.heads.len()
    }

    /// Flattened parameter vector: encoder layers (weights row-major, then
    /// bias) followed by heads (alpha, beta, gamma). The encoder prefix
    /// length is `encoder_param_count`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.encoder.layers {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
        for head in &self.heads {
            out.push(head.alpha);
            out.extend(head.beta.iter());
            out.extend(head.gamma.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for layer in &mut self.encoder.layers {
            for v in layer.w.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
            for v in layer.b.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        }
        for head in &mut self.heads {
            head.alpha = it.next().expect("parameter vector too short");
            for v in head.beta.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
            for v in head.gamma.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder
            .layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }
}

/// Single-sample logit.
pub fn forward_logit(encoder: &EncoderMlp, heads: &[Head], x: ArrayView1<f64>, e: usize) -> f64 {
    let x2 = x.insert_axis(ndarray::Axis(0)).to_owned();
    let h = encoder.forward(&x2);
    heads[e].logit(h.row(0))
}

/// Rows h(x) for a batch of observations.
pub fn encode(encoder: &EncoderMlp, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != encoder.d_x() {
        return Err(ForgeError::DimensionMismatch(format!(
            "encoder expects {} inputs, got {}",
            encoder.d_x(),
            x.ncols()
        )));
    }
    Ok(encoder.forward(x))
}

/// Labeled classification batch: row r of `x` belongs to environment
/// `env[r]` with label `y[r]` (1 = concept data, 0 = base data).
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub x: Array2<f64>,
    pub env: Vec<usize>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub l1: f64,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: Vec<(Array2<f64>, Array1<f64>)>,
    /// Per head: (d alpha, d beta, d gamma).
    pub heads: Vec<(f64, Array1<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Same ordering as `Model::flat_params`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.encoder {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        for (alpha, beta, gamma) in &self.heads {
            out.push(*alpha);
            out.extend(beta.iter());
            out.extend(gamma.iter());
        }
        out
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Balanced CE summed per environment plus the L1 term on beta. Each
/// environment's CE is the mean over that environment's batch rows of
/// softplus(g) - y*g.
pub fn loss(model: &Model, batch: &LabeledBatch, l1_weight: f64) -> LossParts {
    let h = model.encoder.forward(&batch.x);
    let mut counts = vec![0usize; model.m()];
    for &e in &batch.env {
        counts[e] += 1;
    }
    let mut ce = 0.0;
    for r in 0..batch.x.nrows() {
        let e = batch.env[r];
        let g = model.heads[e].logit(h.row(r));
        ce += (softplus(g) - batch.y[r] * g) / counts[e] as f64;
    }
    let l1: f64 = model
        .heads
        .iter()
        .map(|head| head.beta.iter().map(|b| b.abs()).sum::<f64>())
        .sum();
    LossParts {
        total: ce + l1_weight * l1,
        ce,
        l1: l1_weight * l1,
    }
}

/// Loss together with exact gradients for every parameter. The L1 term
/// contributes sign(beta), with subgradient 0 at beta = 0.
pub fn loss_and_grads(model: &Model, batch: &LabeledBatch, l1_weight: f64) -> (LossParts, Gradients) {
    let n_rows = batch.x.nrows();
    let acts = model.encoder.forward_full(&batch.x);
    let h = acts.last().unwrap();
    let n_out = model.n();

    let mut counts = vec![0usize; model.m()];
    for &e in &batch.env {
        counts[e] += 1;
    }

    let mut ce = 0.0;
    let mut dh: Array2<f64> = Array2::zeros((n_rows, n_out));
    let mut head_grads: Vec<(f64, Array1<f64>, Array1<f64>)> = model
        .heads
        .iter()
        .map(|head| {
            (
                0.0,
                Array1::zeros(head.slots.len()),
                Array1::zeros(head.slots.len()),
            )
        })
        .collect();

    for r in 0..n_rows {
        let e = batch.env[r];
        let head = &model.heads[e];
        let h_row = h.row(r);
        let g = head.logit(h_row);
        let w = 1.0 / counts[e] as f64;
        ce += w * (softplus(g) - batch.y[r] * g);
        let dg = w * (sigmoid(g) - batch.y[r]);
        let grad = &mut head_grads[e];
        grad.0 += dg;
        for (k, &slot) in head.slots.iter().enumerate() {
            let v = h_row[slot];
            grad.1[k] += dg * (-2.0 * head.beta[k] * v * v);
            grad.2[k] += dg * v;
            dh[[r, slot]] += dg * (-2.0 * head.beta[k] * head.beta[k] * v + head.gamma[k]);
        }
    }

    let mut l1 = 0.0;
    for (head, grad) in model.heads.iter().zip(head_grads.iter_mut()) {
        for (k, &b) in head.beta.iter().enumerate() {
            l1 += b.abs();
            grad.1[k] += l1_weight * b.signum() * if b == 0.0 { 0.0 } else { 1.0 };
        }
    }

    // Backpropagate through the encoder layers.
    let layer_count = model.encoder.layers.len();
    let mut encoder_grads: Vec<(Array2<f64>, Array1<f64>)> = model
        .encoder
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut delta = dh;
    for l in (0..layer_count).rev() {
        let input: ArrayView2<f64> = if l == 0 {
            batch.x.view()
        } else {
            acts[l - 1].view()
        };
        encoder_grads[l].0 = delta.t().dot(&input);
        encoder_grads[l].1 = delta.sum_axis(ndarray::Axis(0));
        if l > 0 {
            let mut prev = delta.dot(&model.encoder.layers[l].w);
            for (p, &a) in prev.iter_mut().zip(acts[l - 1].iter()) {
                *p *= model.encoder.activation.slope_from_output(a);
            }
            delta = prev;
        }
    }

    (
        LossParts {
            total: ce + l1_weight * l1,
            ce,
            l1: l1_weight * l1,
        },
        Gradients {
            encoder: encoder_grads,
            heads: head_grads,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_head: f64,
    pub lr_encoder: f64,
    pub l1_weight: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub encoder: EncoderKind,
    pub encoder_activation: Activation,
    pub structure: StructureMode,
    pub seed: u64,
    /// Cosine-annealing cycle length in epochs; 0 anneals once over the whole
    /// run, a positive value restarts the schedule (warm restarts).
    pub restart_period_epochs: usize,
    /// Independent training runs (distinct initializations). With more than
    /// one, a tenth of every environment is held out and the run with the
    /// lowest held-out loss is kept; selecting on training loss instead would
    /// favor runs that overfit sampling noise.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            lr_head: 0.5,
            lr_encoder: 0.005,
            l1_weight: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            encoder: EncoderKind::Mlp,
            encoder_activation: Activation::default(),
            structure: StructureMode::KnownStructure,
            seed: 0,
            restart_period_epochs: 0,
            restarts: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr_head > 0.0) || !(self.lr_encoder > 0.0) {
            return Err(ForgeError::Config("learning rates must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(ForgeError::Config("batch size must be at least 2".into()));
        }
        if self.restarts == 0 {
            return Err(ForgeError::Config("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total_loss: f64,
    pub ce_loss: f64,
    pub l1_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(dim: usize, config: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    /// One step; `lr` gives the per-parameter learning rate.
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: impl Fn(usize) -> f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr(i) * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn init_model(
    d_x: usize,
    n: usize,
    slots_per_env: &[Vec<usize>],
    kind: EncoderKind,
    activation: Activation,
    rng: &mut impl Rng,
) -> Model {
    let encoder = EncoderMlp::init(kind, activation, d_x, n, rng);
    let heads = slots_per_env
        .iter()
        .map(|slots| Head::new(slots.clone()))
        .collect();
    Model { encoder, heads }
}

fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn train_once(
    dataset: &Dataset,
    n: usize,
    slots_per_env: &[Vec<usize>],
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(Model, Vec<EpochLoss>)> {
    let m = dataset.m();
    let d_x = dataset.d_x();
    let mut model = init_model(
        d_x,
        n,
        slots_per_env,
        config.encoder,
        config.encoder_activation,
        rng,
    );
    if config.epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let samples = dataset.samples_per_env();
    let half = (config.batch_size / 2).max(1);
    let steps_per_epoch = samples.div_ceil(half);
    let cycle_steps = if config.restart_period_epochs > 0 {
        (config.restart_period_epochs * steps_per_epoch) as f64
    } else {
        (config.epochs * steps_per_epoch) as f64
    };

    let mut params = model.flat_params();
    let encoder_len = model.encoder_param_count();
    let mut adam = Adam::new(params.len(), config);
    let mut history = Vec::with_capacity(config.epochs);
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        let env_order: Vec<Vec<usize>> = (0..m).map(|_| shuffled_indices(samples, rng)).collect();
        let base_order: Vec<Vec<usize>> = (0..m).map(|_| shuffled_indices(samples, rng)).collect();
        let mut epoch_total = 0.0;
        let mut epoch_ce = 0.0;
        let mut epoch_l1 = 0.0;

        for step in 0..steps_per_epoch {
            let lo = step * half;
            let hi = ((step + 1) * half).min(samples);
            let slice = hi - lo;
            let rows = 2 * slice * m;
            let mut x = Array2::zeros((rows, d_x));
            let mut env = Vec::with_capacity(rows);
            let mut y = Vec::with_capacity(rows);
            let mut r = 0;
            for e in 0..m {
                for &idx in &env_order[e][lo..hi] {
                    x.row_mut(r).assign(&dataset.env_x[e].row(idx));
                    env.push(e);
                    y.push(1.0);
                    r += 1;
                }
                for &idx in &base_order[e][lo..hi] {
                    x.row_mut(r).assign(&dataset.base_x.row(idx));
                    env.push(e);
                    y.push(0.0);
                    r += 1;
                }
            }
            let batch = LabeledBatch { x, env, y };
            let (parts, grads) = loss_and_grads(&model, &batch, config.l1_weight);
            if !parts.total.is_finite() {
                return Err(ForgeError::NumericalDivergence(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            let cycle_pos = global_step as f64 % cycle_steps;
            let anneal = 0.5 * (1.0 + (std::f64::consts::PI * cycle_pos / cycle_steps).cos());
            let flat_grads = grads.flat();
            adam.step(&mut params, &flat_grads, |i| {
                if i < encoder_len {
                    config.lr_encoder * anneal
                } else {
                    config.lr_head * anneal
                }
            });
            model.set_flat_params(&params);
            global_step += 1;
            epoch_total += parts.total;
            epoch_ce += parts.ce;
            epoch_l1 += parts.l1;
        }

        history.push(EpochLoss {
            epoch,
            total_loss: epoch_total / steps_per_epoch as f64,
            ce_loss: epoch_ce / steps_per_epoch as f64,
            l1_loss: epoch_l1 / steps_per_epoch as f64,
        });
    }

    Ok((model, history))
}

/// Trains a model on the dataset. `n` is the number of atoms (encoder
/// outputs). With `StructureMode::KnownStructure` the per-environment atom
/// lists must be supplied; in `Dense` mode every head reads all n outputs.
///
/// Each optimizer step uses a balanced slice per environment: batch_size/2
/// concept rows (label 1) and batch_size/2 base rows (label 0), drawn from
/// independent per-epoch reshuffles. With `restarts > 1` the whole procedure
/// runs from that many initializations and keeps the run with the lowest
/// final-epoch loss — the contrastive objective is nonconvex and a restart
/// is the cheapest escape from a rotated local optimum.
pub fn train(
    dataset: &Dataset,
    n: usize,
    structure: Option<&[Vec<usize>]>,
    config: &TrainConfig,
) -> Result<(Model, Vec<EpochLoss>)> {
    config.validate()?;
    let m = dataset.m();
    let slots_per_env: Vec<Vec<usize>> = match config.structure {
        StructureMode::KnownStructure => {
            let structure = structure.ok_or_else(|| {
                ForgeError::Config("known-structure training requires the atom lists".into())
            })?;
            if structure.len() != m {
                return Err(ForgeError::DimensionMismatch(format!(
                    "{} atom lists for {} environments",
                    structure.len(),
                    m
                )));
            }
            for slots in structure {
                if slots.iter().any(|&i| i >= n) {
                    return Err(ForgeError::DimensionMismatch(
                        "atom index out of range in structure".into(),
                    ));
                }
            }
            structure.to_vec()
        }
        StructureMode::Dense => vec![(0..n).collect(); m],
    };

    let split = (config.restarts > 1).then(|| holdout_split(dataset)).flatten();
    let fit_data = split.as_ref().map_or(dataset, |(train, _)| train);

    let mut best: Option<(Model, Vec<EpochLoss>)> = None;
    let mut best_score = f64::INFINITY;
    for restart in 0..config.restarts {
        let mut rng = rng::indexed(config.seed, "trainer", restart as u64);
        let run = train_once(fit_data, n, &slots_per_env, config, &mut rng)?;
        let score = match &split {
            Some((_, val)) => loss(&run.0, val, config.l1_weight).total,
            None => run.1.last().map(|h| h.total_loss).unwrap_or(f64::INFINITY),
        };
        log::debug!("restart {restart}: selection loss {score:.6}");
        if best.is_none() || score < best_score {
            best = Some(run);
            best_score = score;
        }
    }
    Ok(best.expect("at least one restart"))
}

const HOLDOUT_FRACTION: f64 = 0.1;

/// Splits off the trailing tenth of every environment (rows are already in
/// sampler order, so any slice is an unbiased subsample) and packs it into a
/// labeled batch for scoring. `None` when the dataset is too small to split.
fn holdout_split(dataset: &Dataset) -> Option<(Dataset, LabeledBatch)> {
    let samples = dataset.samples_per_env();
    let val_rows = ((samples as f64 * HOLDOUT_FRACTION).round() as usize).max(1);
    let train_rows = samples.checked_sub(val_rows)?;
    if train_rows < 2 {
        return None;
    }
    let m = dataset.m();
    let d_x = dataset.d_x();

    let head = |a: &Array2<f64>| a.slice(ndarray::s![..train_rows, ..]).to_owned();
    let train = Dataset {
        base_x: head(&dataset.base_x),
        base_z: head(&dataset.base_z),
        env_x: dataset.env_x.iter().map(&head).collect(),
        env_z: dataset.env_z.iter().map(&head).collect(),
        stats: dataset.stats.clone(),
    };

    let rows = 2 * val_rows * m;
    let mut x = Array2::zeros((rows, d_x));
    let mut env = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    let mut r = 0;
    for e in 0..m {
        for (src, label) in [(&dataset.env_x[e], 1.0), (&dataset.base_x, 0.0)] {
            for i in train_rows..samples {
                x.row_mut(r).assign(&src.row(i));
                env.push(e);
                y.push(label);
                r += 1;
            }
        }
    }
    Some((train, LabeledBatch { x, env, y }))
}
