use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SequenceDataset;
use crate::error::{Error, Result};
use crate::qgru::ModelDims;

use super::gru::{backward, cross_entropy, forward_sequence, predict, Identity, SiteTransform};
use super::GRUWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Share of the data held out for model selection.
    pub validation_fraction: f64,
    pub validate_every: usize,
    /// Share of the remaining data actually trained on.
    pub train_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    /// Float baseline training.
    pub fn float_baseline() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 50,
            learning_rate: 1e-3,
            validation_fraction: 0.05,
            validate_every: 5,
            train_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip: Some(1.0),
            seed: 42,
        }
    }

    /// QAT of homogeneously quantized baselines.
    pub fn homogeneous_qat() -> Self {
        TrainConfig { batch_size: 1024, epochs: 30, learning_rate: 5e-5, ..Self::float_baseline() }
    }

    /// QAT inside the mixed-precision search.
    pub fn mixed_precision_qat() -> Self {
        TrainConfig {
            batch_size: 1024,
            epochs: 12,
            learning_rate: 5e-5,
            train_fraction: 0.1,
            validate_every: 3,
            ..Self::float_baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if self.batch_size == 0 || self.validate_every == 0 {
            return Err(Error::Config("batch_size and validate_every must be positive".into()));
        }
        if !frac_ok(self.validation_fraction) || !frac_ok(self.train_fraction) {
            return Err(Error::Config("fractions must lie in (0, 1]".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: GRUWeights,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// `(epoch, accuracy)` for every validation pass.
    pub validations: Vec<(usize, f64)>,
    pub best_validation_accuracy: f64,
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(w: &GRUWeights, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = w.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, w: &mut GRUWeights, grad: &GRUWeights) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in w.params_mut().into_iter().zip(grad.params()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

fn clip_global_norm(grad: &mut GRUWeights, max_norm: f64) {
    let norm = grad.params().iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in grad.params_mut() {
            p.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Classification accuracy of the float model.
pub fn accuracy(w: &GRUWeights, data: &SequenceDataset) -> f64 {
    accuracy_with(w, data, &mut Identity)
}

pub(crate) fn accuracy_with(w: &GRUWeights, data: &SequenceDataset, tf: &mut dyn SiteTransform) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = (0..data.len())
        .filter(|&i| predict(&forward_sequence(w, data.sequence(i), tf).logits) == data.label(i))
        .count();
    correct as f64 / data.len() as f64
}

/// Trains a freshly initialized model (uniform `±1/sqrt(H)`, seeded by
/// `cfg.seed`).
pub fn train(data: &SequenceDataset, hidden_size: usize, cfg: &TrainConfig) -> Result<TrainReport> {
    let dims = ModelDims::new(data.features(), hidden_size, data.num_classes())?;
    let init = GRUWeights::init_uniform(dims, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    train_from(init, data, cfg)
}

/// Continues training from `init` with mini-batch Adam.
pub fn train_from(init: GRUWeights, data: &SequenceDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    fit(init, data, cfg, None)
}

/// Hooks used by QAT: a per-batch weight transform and a site transform
/// whose statistics are refreshed after each batch.
pub(crate) trait QuantHooks {
    fn forward_weights(&self, master: &GRUWeights) -> GRUWeights;
    fn training_transform(&mut self) -> &mut dyn SiteTransform;
    fn end_batch(&mut self);
    fn eval_transform(&mut self) -> &mut dyn SiteTransform;
}

const GRAD_CHUNK: usize = 16;

/// Summed loss and gradient over `idx`.
fn accumulate(w: &GRUWeights, data: &SequenceDataset, idx: &[usize], tf: &mut dyn SiteTransform) -> (f64, GRUWeights) {
    let mut grad = GRUWeights::zeros(w.dims);
    let mut total = 0.0;
    for &i in idx {
        let trace = forward_sequence(w, data.sequence(i), tf);
        let (loss, dlogits) = cross_entropy(&trace.logits, data.label(i));
        total += loss;
        backward(w, &trace, &dlogits, &mut grad);
    }
    (total, grad)
}

pub(crate) fn fit(
    init: GRUWeights,
    data: &SequenceDataset,
    cfg: &TrainConfig,
    mut hooks: Option<&mut dyn QuantHooks>,
) -> Result<TrainReport> {
    cfg.validate()?;
    init.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset".into()));
    }
    if data.num_classes() != init.dims.num_classes || data.features() != init.dims.input_features {
        return Err(Error::Config("dataset shape does not match the model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.validation_fraction * data.len() as f64).ceil() as usize).min(data.len() - 1);
    let (val_idx, rest) = order.split_at(n_val);
    let n_train = ((cfg.train_fraction * rest.len() as f64).ceil() as usize).clamp(1, rest.len());
    let mut train_idx = rest[..n_train].to_vec();
    let val = data.subset(val_idx);

    let mut w = init;
    let mut adam = Adam::new(&w, cfg);
    let mut best = w.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut validations = Vec::new();

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let fw = match hooks.as_deref() {
                Some(h) => h.forward_weights(&w),
                None => w.clone(),
            };
            let (batch_loss, mut grad) = match hooks.as_deref_mut() {
                Some(h) => {
                    let out = accumulate(&fw, data, batch, h.training_transform());
                    h.end_batch();
                    out
                }
                // fixed chunking keeps the summation order independent of the thread count
                None => batch
                    .par_chunks(GRAD_CHUNK)
                    .map(|c| accumulate(&fw, data, c, &mut Identity))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .fold((0.0, GRUWeights::zeros(w.dims)), |(l, mut g), (cl, cg)| {
                        g.add_assign(&cg);
                        (l + cl, g)
                    }),
            };
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss: batch_loss });
            }
            total += batch_loss;
            let inv = 1.0 / batch.len() as f64;
            for p in grad.params_mut() {
                p.iter_mut().for_each(|g| *g *= inv);
            }
            if let Some(clip) = cfg.grad_clip {
                clip_global_norm(&mut grad, clip);
            }
            adam.step(&mut w, &grad);
        }
        epoch_losses.push(total / train_idx.len() as f64);

        if epoch % cfg.validate_every == 0 || epoch == cfg.epochs {
            let acc = match hooks.as_deref_mut() {
                Some(h) => {
                    let fw = h.forward_weights(&w);
                    accuracy_with(&fw, &val, h.eval_transform())
                }
                None => accuracy(&w, &val),
            };
            log::debug!("epoch {epoch}: loss {:.5}, validation accuracy {acc:.4}", epoch_losses[epoch - 1]);
            validations.push((epoch, acc));
            if acc > best_acc {
                best_acc = acc;
                best = w.clone();
            }
        }
    }
    if cfg.epochs == 0 {
        best_acc = accuracy(&w, &val);
        best = w;
    }
    Ok(TrainReport { weights: best, epoch_losses, validations, best_validation_accuracy: best_acc })
}
