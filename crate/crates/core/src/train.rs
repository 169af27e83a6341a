//! Mini-batch training of the backbone and evidence head under the
//! annealed variational objective.
//!
//! The loop is fully deterministic: weight init, per-epoch shuffling, and
//! every arithmetic step derive from the config seed, so identical
//! (config, data, seed) produce byte-identical checkpoints.

use crate::data::Dataset;
use crate::dirichlet::PriorParams;
use crate::error::{Error, Result};
use crate::head::EvidenceHead;
use crate::loss::{
    edl_baseline_grad, edl_baseline_loss, expected_mse, vi_loss_grad, LabelVector, LossConfig,
};
use crate::nn::{Activation, Mlp};
use crate::rng::SplitMix64;
use std::fmt::Write as _;

/// KL ramp factor lambda_t = min(1, t / warmup), with epochs counted from 1.
pub fn anneal_factor(t: usize, warmup: usize) -> f64 {
    assert!(t >= 1 && warmup >= 1, "epoch index and warmup start at 1");
    (t as f64 / warmup as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Which objective drives the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Expected MSE + annealed beta-weighted effective KL over all classes.
    Variational,
    /// Classic masked-KL evidential loss, for comparison runs.
    EdlBaseline,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vi" => Ok(Objective::Variational),
            "edl" => Ok(Objective::EdlBaseline),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

/// Backbone architecture: input -> hidden widths -> feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossConfig,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub objective: Objective,
    pub arch: MlpSpec,
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lambda_t: f64,
    pub loss: f64,
    pub bias_term: f64,
    pub variance_term: f64,
    /// Mean annealed KL contribution (already scaled by lambda_t and beta).
    pub kl_term: f64,
    /// Mean total evidence sum_k e_k per sample.
    pub mean_evidence: f64,
    pub mean_uncertainty: f64,
}

/// CSV rendering of the per-epoch log.
pub fn epoch_log_csv(log: &[EpochStats]) -> String {
    let mut out =
        String::from("epoch,lambda_t,loss,bias_term,variance_term,kl_term,mean_evidence,mean_uncertainty\n");
    for s in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.epoch, s.lambda_t, s.loss, s.bias_term, s.variance_term, s.kl_term,
            s.mean_evidence, s.mean_uncertainty
        );
    }
    out
}

/// Adam moment estimates, one slot per trainable scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub step: u64,
    pub m: ParamBlock,
    pub v: ParamBlock,
}

/// A container shaped exactly like the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub prototypes: Vec<Vec<f64>>,
    pub log_scale: f64,
    pub margin: f64,
}

impl ParamBlock {
    fn zeros_like(net: &Mlp, head: &EvidenceHead) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weight.data.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            prototypes: head.prototypes().iter().map(|p| vec![0.0; p.len()]).collect(),
            log_scale: 0.0,
            margin: 0.0,
        }
    }

    fn scale(&mut self, c: f64) {
        for v in self.weights.iter_mut().flatten() {
            *v *= c;
        }
        for v in self.biases.iter_mut().flatten() {
            *v *= c;
        }
        for v in self.prototypes.iter_mut().flatten() {
            *v *= c;
        }
        self.log_scale *= c;
        self.margin *= c;
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam: Option<AdamMoments>,
}

impl Optimizer {
    fn new(kind: OptimizerKind, learning_rate: f64, net: &Mlp, head: &EvidenceHead) -> Self {
        let adam = match kind {
            OptimizerKind::Adam => Some(AdamMoments {
                step: 0,
                m: ParamBlock::zeros_like(net, head),
                v: ParamBlock::zeros_like(net, head),
            }),
            OptimizerKind::Sgd => None,
        };
        Self { kind, learning_rate, adam }
    }

    fn step(&mut self, net: &mut Mlp, head: &mut EvidenceHead, grads: &ParamBlock) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                walk_params(net, head, grads, |p, g| *p -= lr * g);
            }
            OptimizerKind::Adam => {
                let adam = self.adam.as_mut().expect("adam moments present");
                adam.step += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(adam.step as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(adam.step as i32);
                walk_moments(net, head, grads, &mut adam.m, &mut adam.v, |p, g, m, v| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
            }
        }
        head.clamp_margin();
    }
}

fn walk_params(
    net: &mut Mlp,
    head: &mut EvidenceHead,
    grads: &ParamBlock,
    mut f: impl FnMut(&mut f64, f64),
) {
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        for (i, p) in layer.weight.data.iter_mut().enumerate() {
            f(p, grads.weights[l][i]);
        }
        for (i, p) in layer.bias.iter_mut().enumerate() {
            f(p, grads.biases[l][i]);
        }
    }
    let (protos, log_scale, margin) = head.params_mut();
    for (k, proto) in protos.iter_mut().enumerate() {
        for (i, p) in proto.iter_mut().enumerate() {
            f(p, grads.prototypes[k][i]);
        }
    }
    f(log_scale, grads.log_scale);
    f(margin, grads.margin);
}

/// Walk parameters, gradients, and both Adam moment blocks in lockstep,
/// in the fixed declaration order (weights, biases, prototypes, scale,
/// margin) so reductions stay deterministic.
fn walk_moments(
    net: &mut Mlp,
    head: &mut EvidenceHead,
    grads: &ParamBlock,
    m: &mut ParamBlock,
    v: &mut ParamBlock,
    mut f: impl FnMut(&mut f64, f64, &mut f64, &mut f64),
) {
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        for (i, p) in layer.weight.data.iter_mut().enumerate() {
            f(p, grads.weights[l][i], &mut m.weights[l][i], &mut v.weights[l][i]);
        }
        for (i, p) in layer.bias.iter_mut().enumerate() {
            f(p, grads.biases[l][i], &mut m.biases[l][i], &mut v.biases[l][i]);
        }
    }
    let (protos, log_scale, margin) = head.params_mut();
    for (k, proto) in protos.iter_mut().enumerate() {
        for (i, p) in proto.iter_mut().enumerate() {
            f(p, grads.prototypes[k][i], &mut m.prototypes[k][i], &mut v.prototypes[k][i]);
        }
    }
    f(log_scale, grads.log_scale, &mut m.log_scale, &mut v.log_scale);
    f(margin, grads.margin, &mut m.margin, &mut v.margin);
}

/// Model, optimizer moments, and the training log.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Mlp,
    pub head: EvidenceHead,
    pub prior: PriorParams,
    pub optimizer: Optimizer,
    pub epoch: usize,
    pub log: Vec<EpochStats>,
}

impl TrainState {
    /// Fresh state from the config seed: Glorot backbone, uniform
    /// prototypes, zeroed optimizer moments.
    pub fn init(input_dim: usize, k: usize, cfg: &TrainConfig) -> Result<Self> {
        if cfg.loss.prior.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "prior has {} components for {k} classes",
                cfg.loss.prior.len()
            )));
        }
        let mut rng = SplitMix64::new(cfg.seed);
        let mut dims = Vec::with_capacity(cfg.arch.hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&cfg.arch.hidden_dims);
        dims.push(cfg.arch.feature_dim);
        let net = Mlp::init(&dims, cfg.arch.activation, &mut rng)?;
        let head = EvidenceHead::init(k, cfg.arch.feature_dim, &mut rng)?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net, &head);
        Ok(Self {
            net,
            head,
            prior: cfg.loss.prior.clone(),
            optimizer,
            epoch: 0,
            log: Vec::new(),
        })
    }
}

fn labels_of(data: &Dataset) -> Result<&[usize]> {
    data.labels
        .as_deref()
        .ok_or_else(|| Error::Invariant("training data must carry labels".into()))
}

/// One pass over the data: shuffle, mini-batch gradient steps, stats row.
pub fn train_epoch(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset is empty".into()));
    }
    let labels = labels_of(data)?;
    let k = state.head.num_classes();
    let t = state.epoch + 1;
    let lambda_t = anneal_factor(t, cfg.loss.warmup_epochs);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = SplitMix64::new(cfg.seed ^ t as u64);
    shuffle_rng.shuffle(&mut order);

    let mut sum_loss = 0.0;
    let mut sum_bias = 0.0;
    let mut sum_var = 0.0;
    let mut sum_kl = 0.0;
    let mut sum_evidence = 0.0;
    let mut sum_uncertainty = 0.0;

    for (batch_idx, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
        let mut grads = ParamBlock::zeros_like(&state.net, &state.head);
        for &i in batch {
            let x = &data.features[i];
            let y = LabelVector::one_hot(labels[i], k)?;
            let (feature, tape) = state.net.forward(x)?;
            let head_tape = state.head.forward(&feature)?;
            let alpha = head_tape.evidence.to_dirichlet(&state.prior)?;

            let mse = expected_mse(&alpha, &y)?;
            let (kl_contribution, grad_alpha) = match cfg.objective {
                Objective::Variational => {
                    let kl = if lambda_t != 0.0 && cfg.loss.beta != 0.0 {
                        lambda_t * cfg.loss.beta * alpha.effective_kl(&cfg.loss.prior)?
                    } else {
                        0.0
                    };
                    (kl, vi_loss_grad(&alpha, &y, &cfg.loss, lambda_t)?)
                }
                Objective::EdlBaseline => {
                    let full = edl_baseline_loss(&alpha, &y, lambda_t)?;
                    (full - mse.total, edl_baseline_grad(&alpha, &y, lambda_t)?)
                }
            };
            let loss = mse.total + kl_contribution;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: t,
                    batch: batch_idx,
                    detail: param_norms(state),
                });
            }
            sum_loss += loss;
            sum_bias += mse.bias;
            sum_var += mse.variance;
            sum_kl += kl_contribution;
            sum_evidence += head_tape.evidence.total();
            sum_uncertainty += alpha.uncertainty(&state.prior)?;

            // d(loss)/d(evidence) = d(loss)/d(alpha) since alpha = e + lambda.
            let head_grads = state.head.backward(&head_tape, &grad_alpha)?;
            let net_grads = state.net.backward(&tape, &head_grads.feature)?;

            for (acc, g) in grads.weights.iter_mut().zip(&net_grads.weights) {
                for (a, b) in acc.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
            for (acc, g) in grads.biases.iter_mut().zip(&net_grads.biases) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            for (acc, g) in grads.prototypes.iter_mut().zip(&head_grads.prototypes) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            // Chain rule through gamma = exp(log_scale).
            grads.log_scale += head_grads.scale * state.head.scale();
            grads.margin += head_grads.margin;
        }
        grads.scale(1.0 / batch.len() as f64);
        state.optimizer.step(&mut state.net, &mut state.head, &grads);
    }

    let n = data.len() as f64;
    let stats = EpochStats {
        epoch: t,
        lambda_t,
        loss: sum_loss / n,
        bias_term: sum_bias / n,
        variance_term: sum_var / n,
        kl_term: sum_kl / n,
        mean_evidence: sum_evidence / n,
        mean_uncertainty: sum_uncertainty / n,
    };
    state.epoch = t;
    state.log.push(stats);
    Ok(stats)
}

fn param_norms(state: &TrainState) -> String {
    let wnorm: f64 = state
        .net
        .layers()
        .iter()
        .map(|l| l.weight.data.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let pnorm: f64 = state
        .head
        .prototypes()
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    format!(
        "||W|| = {wnorm:.3e}, ||prototypes|| = {pnorm:.3e}, gamma = {:.3e}, margin = {:.3}",
        state.head.scale(),
        state.head.margin()
    )
}

/// Run the full training loop from a fresh seed-derived state.
pub fn fit(data: &Dataset, cfg: &TrainConfig) -> Result<TrainState> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset is empty".into()));
    }
    let labels = labels_of(data)?;
    let k = labels.iter().max().map(|&m| m + 1).unwrap_or(0).max(2);
    let mut state = TrainState::init(data.dim(), k, cfg)?;
    for _ in 0..cfg.epochs {
        train_epoch(&mut state, data, cfg)?;
    }
    Ok(state)
}

/// Flat key=value config file.
///
/// Required keys: epochs, batch_size, learning_rate, beta, warmup_epochs,
/// seed, optimizer. Optional: prior (scalar or comma list, default 1.0),
/// hidden_dims (default 32), feature_dim (default 16), activation
/// (default relu), objective (default vi).
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub prior: PriorSpec,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub objective: Objective,
}

/// Prior given before the class count is known.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "line {}: expected key=value, got '{line}'",
                idx + 1
            )))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let known = [
            "epochs", "batch_size", "learning_rate", "beta", "warmup_epochs", "seed",
            "optimizer", "prior", "hidden_dims", "feature_dim", "activation", "objective",
        ];
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
        }
        let required = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("missing required config key '{key}'")))
        };
        let parse_num = |key: &str, value: &str| -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad value for '{key}': {e}")))
        };

        let epochs = parse_num("epochs", required("epochs")?)? as usize;
        if epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        let batch_size = parse_num("batch_size", required("batch_size")?)? as usize;
        if batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let learning_rate = parse_num("learning_rate", required("learning_rate")?)?;
        if learning_rate.is_nan() || learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        let beta = parse_num("beta", required("beta")?)?;
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Config("beta must be >= 0".into()));
        }
        let warmup_epochs = parse_num("warmup_epochs", required("warmup_epochs")?)? as usize;
        if warmup_epochs < 1 {
            return Err(Error::Config("warmup_epochs must be >= 1".into()));
        }
        let seed = required("seed")?
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("bad value for 'seed': {e}")))?;
        let optimizer: OptimizerKind = required("optimizer")?.parse()?;

        let prior = match map.get("prior") {
            None => PriorSpec::Scalar(1.0),
            Some(v) if v.contains(',') => PriorSpec::Vector(
                v.split(',')
                    .map(|p| parse_num("prior", p.trim()))
                    .collect::<Result<_>>()?,
            ),
            Some(v) => PriorSpec::Scalar(parse_num("prior", v)?),
        };
        let hidden_dims = match map.get("hidden_dims") {
            None => vec![32],
            Some(v) if v.is_empty() => vec![],
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("bad hidden_dims entry '{p}': {e}")))
                })
                .collect::<Result<_>>()?,
        };
        let feature_dim = match map.get("feature_dim") {
            None => 16,
            Some(v) => v
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad value for 'feature_dim': {e}")))?,
        };
        let activation = match map.get("activation") {
            None => Activation::Relu,
            Some(v) => v.parse()?,
        };
        let objective = match map.get("objective") {
            None => Objective::Variational,
            Some(v) => v.parse()?,
        };
        Ok(Self {
            epochs,
            batch_size,
            learning_rate,
            beta,
            warmup_epochs,
            seed,
            optimizer,
            prior,
            hidden_dims,
            feature_dim,
            activation,
            objective,
        })
    }

    /// Bind the class count, yielding a runnable training config.
    pub fn into_train_config(self, k: usize) -> Result<TrainConfig> {
        let prior = match self.prior {
            PriorSpec::Scalar(v) => PriorParams::new(vec![v; k])?,
            PriorSpec::Vector(v) => {
                if v.len() != k {
                    return Err(Error::Config(format!(
                        "prior has {} components for {k} classes",
                        v.len()
                    )));
                }
                PriorParams::new(v)?
            }
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            loss: LossConfig::new(self.beta, prior, self.warmup_epochs)?,
            seed: self.seed,
            optimizer: self.optimizer,
            objective: self.objective,
            arch: MlpSpec {
                hidden_dims: self.hidden_dims,
                feature_dim: self.feature_dim,
                activation: self.activation,
            },
        })
    }
}
