use std::hash::{DefaultHasher, Hasher};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionParams, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};
use crate::sfmask::{self, MaskMode};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Share of the train split used, in `(0, 1]`.
    pub train_fraction: f64,
    pub seed: u64,
    /// Overrides the model config's mask mode.
    pub mask_mode: MaskMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 1e-2,
            train_fraction: 1.0,
            seed: 0,
            mask_mode: MaskMode::Full,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        if !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning rate must be finite".into()));
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub train_split_size: usize,
    pub train_graphs_used: usize,
    /// Hash of the initial parameters; equal digests mean equal initialization.
    pub init_digest: String,
    /// Mean training loss before each epoch's update.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// First `⌈fraction · |train|⌉` (at least one) indices of a seeded shuffle of
/// `train`.
pub fn select_train_subset(train: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {fraction} outside (0, 1]"
        )));
    }
    if train.is_empty() {
        return Err(Error::Dataset("train split is empty".into()));
    }
    // absorb representation error such as 0.05 · 80 = 4.000000000000001
    let take = ((fraction * train.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut idx = train.to_vec();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(take.min(train.len()));
    Ok(idx)
}

/// Node features of `g`, or a single column of degree over `max(n − 1, 1)`
/// for featureless graphs.
pub fn node_features(g: &Graph) -> Array2<f64> {
    match g.features() {
        Some(x) => x.clone(),
        None => {
            let scale = (g.node_count().max(2) - 1) as f64;
            let deg = g.degrees();
            Array2::from_shape_fn((g.node_count(), 1), |(i, _)| deg[i] as f64 / scale)
        }
    }
}

/// A two-layer, two-head model of width 8 sized to the dataset.
pub fn default_model_config(ds: &GraphDataset, seed: u64) -> ModelConfig {
    ModelConfig::new(
        ds.feature_dim().unwrap_or(1),
        8,
        2,
        2,
        ds.num_classes().max(1),
    )
    .with_seed(seed)
}

/// Stable hexadecimal digest of all parameter bits.
pub fn params_digest(params: &AttentionParams) -> String {
    let mut h = DefaultHasher::new();
    for (name, shape, data) in params.tensors() {
        h.write(name.as_bytes());
        for s in shape {
            h.write_usize(s);
        }
        for v in data {
            h.write_u64(v.to_bits());
        }
    }
    format!("{:016x}", h.finish())
}

struct Sample {
    x: Array2<f64>,
    mask: Array2<f64>,
    label: usize,
}

fn prepare(ds: &GraphDataset, idx: &[usize], mode: MaskMode) -> Result<Vec<Sample>> {
    idx.iter()
        .map(|&i| {
            let g = &ds.graphs()[i];
            let x = node_features(g);
            let mask = sfmask::build_mask(g, Some(&x), mode)?;
            Ok(Sample {
                x,
                mask,
                label: g.label().expect("dataset graphs are labeled"),
            })
        })
        .collect()
}

fn accuracy(
    samples: &[Sample],
    params: &AttentionParams,
    cfg: &ModelConfig,
) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let mut correct = 0usize;
    for s in samples {
        let logits: Array1<f64> = attention::forward_with_mask(&s.x, &s.mask, params, cfg)?;
        let pred = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &z)| {
                if z > best.1 {
                    (k, z)
                } else {
                    best
                }
            })
            .0;
        correct += usize::from(pred == s.label);
    }
    Ok(Some(correct as f64 / samples.len() as f64))
}

/// Overflowing weights surface as non-finite activations.
fn diverged_at(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Full-batch gradient descent on mean cross-entropy over the selected train
/// graphs. Masks are computed once per graph from its input features.
pub fn train(ds: &GraphDataset, cfg: &TrainConfig, mcfg: &ModelConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mcfg = ModelConfig {
        mask_mode: cfg.mask_mode,
        ..mcfg.clone()
    };
    mcfg.validate()?;
    let input_dim = ds.feature_dim().unwrap_or(1);
    if mcfg.input_dim != input_dim {
        return Err(Error::shape("model input_dim", input_dim, mcfg.input_dim));
    }
    if mcfg.classes < ds.num_classes() {
        return Err(Error::shape(
            "model classes",
            ds.num_classes(),
            mcfg.classes,
        ));
    }

    let split = ds.split();
    let subset = select_train_subset(&split.train, cfg.train_fraction, cfg.seed)?;
    let train_set = prepare(ds, &subset, cfg.mask_mode)?;
    let val_set = prepare(ds, &split.val, cfg.mask_mode)?;
    let test_set = prepare(ds, &split.test, cfg.mask_mode)?;

    let mut params = attention::init_params(&mcfg)?;
    let init_digest = params_digest(&params);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let step = -cfg.learning_rate / train_set.len() as f64;
    for epoch in 1..=cfg.epochs {
        let mut grad = params.zeros_like();
        let mut total = 0.0;
        for s in &train_set {
            let r = attention::loss_and_grad(&s.x, &s.mask, &params, &mcfg, s.label)
                .map_err(diverged_at(epoch))?;
            total += r.loss;
            grad.scaled_add(1.0, &r.grad);
        }
        let loss = total / train_set.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        losses.push(loss);
        params.scaled_add(step, &grad);
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
    }

    Ok(RunReport {
        seed: cfg.seed,
        train_config: cfg.clone(),
        model_config: mcfg.clone(),
        train_split_size: split.train.len(),
        train_graphs_used: train_set.len(),
        init_digest,
        epoch_losses: losses,
        train_accuracy: accuracy(&train_set, &params, &mcfg).map_err(diverged_at(cfg.epochs))?,
        val_accuracy: accuracy(&val_set, &params, &mcfg).map_err(diverged_at(cfg.epochs))?,
        test_accuracy: accuracy(&test_set, &params, &mcfg).map_err(diverged_at(cfg.epochs))?,
    })
}

/// One [`train`] run per mask mode with otherwise identical settings.
pub fn run_ablation(
    ds: &GraphDataset,
    cfg: &TrainConfig,
    mcfg: &ModelConfig,
    modes: &[MaskMode],
) -> Result<Vec<RunReport>> {
    modes
        .iter()
        .map(|&mask_mode| {
            let cfg = TrainConfig {
                mask_mode,
                ..cfg.clone()
            };
            train(ds, &cfg, mcfg)
        })
        .collect()
}
