//! Mini-batch training with early stopping, and cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Averaging, MetricsReport, Prf};
use super::splits::{assert_no_leakage, make_splits, FoldSplit};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::{FeatureTable, AUDIO_DIM, TEXT_DIM};
use crate::fusion::{
    bce_with_logit, dropout_mask, sigmoid, AttentionVariant, FusionModel, FusionParams, Modality,
    ModelDims, ModelInput,
};

pub const BATCH_SIZES: [usize; 5] = [16, 32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub dropout: f64,
    pub dense_width: usize,
    pub d_k: usize,
    pub seed: u64,
    /// Share of train-side originals held out to monitor early stopping.
    pub validation_fraction: f64,
    pub threshold: f64,
    pub averaging: Averaging,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 2_000,
            early_stop_patience: 50,
            dropout: 0.5,
            dense_width: 512,
            d_k: 512,
            seed: 0,
            validation_fraction: 0.1,
            threshold: 0.5,
            averaging: Averaging::Weighted,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            return err(format!(
                "batch_size must be one of {BATCH_SIZES:?}, got {}",
                self.batch_size
            ));
        }
        if self.max_epochs == 0 {
            return err("max_epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.dense_width == 0 || self.d_k == 0 {
            return err("dense_width and d_k must be positive".into());
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return err(format!(
                "validation_fraction must be in [0, 0.5), got {}",
                self.validation_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return err(format!("threshold must be in [0, 1], got {}", self.threshold));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return err("Adam betas must be in [0, 1)".into());
        }
        if self.adam_epsilon <= 0.0 {
            return err("adam_epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims {
            text_in: TEXT_DIM,
            feature: AUDIO_DIM,
            d_k: self.d_k,
            hidden: self.dense_width,
        }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: FusionParams,
    v: FusionParams,
}

impl Adam {
    pub fn new(params: &FusionParams, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_epsilon,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut FusionParams, grads: &FusionParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let grads = grads.tensors();
        let params = params.slices_mut();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for ((((_, p), (_, _, g)), (_, m)), (_, v)) in
            params.into_iter().zip(grads).zip(ms).zip(vs)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Model inputs keyed by sample id.
#[derive(Debug, Clone, Default)]
pub struct InputTable {
    inputs: BTreeMap<String, ModelInput>,
}

impl InputTable {
    pub fn from_features(features: &FeatureTable) -> Self {
        let ids: Vec<&str> = features.ids().collect();
        let inputs = ids
            .par_iter()
            .map(|id| {
                let f = features.get(id).expect("listed id");
                (id.to_string(), ModelInput::from_features(f))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        Self { inputs }
    }

    pub fn insert(&mut self, id: impl Into<String>, input: ModelInput) {
        self.inputs.insert(id.into(), input);
    }

    pub fn get(&self, id: &str) -> Result<&ModelInput> {
        self.inputs
            .get(id)
            .ok_or_else(|| Error::FeatureFormat(format!("no features for sample `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub fold_id: u8,
    pub model: FusionModel,
    pub history: TrainHistory,
}

/// Deterministic held-out share of the train-side originals. Augmented
/// samples of held-out originals are dropped from training.
pub fn validation_split(
    split: &FoldSplit,
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> (Vec<String>, Vec<String>) {
    let originals: BTreeSet<&str> = corpus.originals().iter().map(|u| u.id.as_str()).collect();
    let mut train_originals: Vec<&String> = split
        .train_ids
        .iter()
        .filter(|id| originals.contains(id.as_str()))
        .collect();
    let n_val = (train_originals.len() as f64 * fraction).round() as usize;
    if n_val == 0 || n_val >= train_originals.len() {
        return (split.train_ids.clone(), Vec::new());
    }
    train_originals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a11));
    let val: BTreeSet<&str> = train_originals[..n_val].iter().map(|s| s.as_str()).collect();
    let parent_of: BTreeMap<&str, &str> = corpus
        .augmented()
        .iter()
        .map(|a| (a.id.as_str(), a.parent_id.as_str()))
        .collect();
    let train = split
        .train_ids
        .iter()
        .filter(|id| {
            let root = parent_of.get(id.as_str()).copied().unwrap_or(id.as_str());
            !val.contains(root)
        })
        .cloned()
        .collect();
    let validation = split
        .train_ids
        .iter()
        .filter(|id| val.contains(id.as_str()))
        .cloned()
        .collect();
    (train, validation)
}

fn labels_for(corpus: &Corpus, ids: &[String]) -> Result<Vec<f64>> {
    let labels: BTreeMap<&str, f64> = corpus.samples().map(|s| (s.id(), s.label().as_f64())).collect();
    ids.iter()
        .map(|id| {
            labels
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidCorpus(format!("unknown sample `{id}`")))
        })
        .collect()
}

fn mean_loss(model: &FusionModel, inputs: &[&ModelInput], labels: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        total += bce_with_logit(model.logit(x)?, y);
    }
    Ok(total / inputs.len() as f64)
}

/// Trains one fold. The returned weights are those of the epoch with the
/// lowest validation loss (training loss when no validation set exists).
pub fn train_fold(
    split: &FoldSplit,
    corpus: &Corpus,
    inputs: &InputTable,
    config: &TrainConfig,
    variant: AttentionVariant,
    modality: Modality,
) -> Result<TrainedFold> {
    config.validate()?;
    let fold_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(split.fold_id as u64);
    let (train_ids, val_ids) = validation_split(split, corpus, config.validation_fraction, fold_seed);
    if train_ids.is_empty() {
        return Err(Error::Empty(format!("fold {} has no training samples", split.fold_id)));
    }
    let train_x: Vec<&ModelInput> = train_ids.iter().map(|id| inputs.get(id)).collect::<Result<_>>()?;
    let train_y = labels_for(corpus, &train_ids)?;
    let val_x: Vec<&ModelInput> = val_ids.iter().map(|id| inputs.get(id)).collect::<Result<_>>()?;
    let val_y = labels_for(corpus, &val_ids)?;

    let mut model = FusionModel::new(config.model_dims(), variant, modality, config.dropout, fold_seed)?;
    let mut adam = Adam::new(&model.params, config);
    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed ^ 0xd20b);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut grads = model.params.zeros_like();

    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            zero(&mut grads);
            let xs: Vec<&ModelInput> = batch.iter().map(|&i| train_x[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let masks: Vec<Array1<f64>> = batch
                .iter()
                .map(|_| dropout_mask(config.dense_width, config.dropout, &mut rng))
                .collect();
            loss_sum += model.batch_loss_and_grad(&xs, &ys, &masks, &mut grads)?;
            scale(&mut grads, 1.0 / batch.len() as f64);
            adam.step(&mut model.params, &grads);
        }
        let train_loss = loss_sum / train_x.len() as f64;
        let validation_loss = if val_x.is_empty() {
            mean_loss(&model, &train_x, &train_y)?
        } else {
            mean_loss(&model, &val_x, &val_y)?
        };
        if !train_loss.is_finite() || !validation_loss.is_finite() || !model.params.is_finite() {
            return Err(Error::NanLoss {
                fold: split.fold_id as usize,
                epoch,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best.0 {
            best.0 = validation_loss;
            best.1 = epoch;
            best.2.assign(&model.params);
        }
        if epoch - best.1 >= config.early_stop_patience {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    model.params = best.2;
    Ok(TrainedFold {
        fold_id: split.fold_id,
        model,
        history: TrainHistory {
            epochs,
            best_epoch: best.1,
            stopped_early,
        },
    })
}

fn zero(p: &mut FusionParams) {
    for (_, s) in p.slices_mut() {
        s.fill(0.0);
    }
}

fn scale(p: &mut FusionParams, k: f64) {
    for (_, s) in p.slices_mut() {
        s.iter_mut().for_each(|v| *v *= k);
    }
}

/// Inference probabilities for `ids`.
pub fn predict(model: &FusionModel, inputs: &InputTable, ids: &[String]) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| Ok(sigmoid(model.logit(inputs.get(id)?)?)))
        .collect()
}

pub fn evaluate_ids(
    model: &FusionModel,
    corpus: &Corpus,
    inputs: &InputTable,
    ids: &[String],
    config: &TrainConfig,
) -> Result<Prf> {
    let probs = predict(model, inputs, ids)?;
    let labels: Vec<bool> = labels_for(corpus, ids)?.iter().map(|&y| y > 0.5).collect();
    evaluate(&probs, &labels, config.threshold, config.averaging)
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub histories: Vec<TrainHistory>,
}

/// Trains and tests all five folds. Folds run in parallel; results keep fold
/// order.
pub fn run_cv(
    name: &str,
    corpus: &Corpus,
    inputs: &InputTable,
    config: &TrainConfig,
    variant: AttentionVariant,
    modality: Modality,
) -> Result<CvOutcome> {
    config.validate()?;
    let splits = make_splits(corpus)?;
    assert_no_leakage(corpus, &splits)?;
    let results: Vec<Result<(Prf, TrainHistory)>> = splits
        .par_iter()
        .map(|split| {
            let wrap = |e: Error| Error::Fold {
                fold: split.fold_id as usize,
                source: Box::new(e),
            };
            if split.test_ids.is_empty() {
                return Err(wrap(Error::Empty("empty test fold".into())));
            }
            let trained = train_fold(split, corpus, inputs, config, variant, modality).map_err(wrap)?;
            let prf = evaluate_ids(&trained.model, corpus, inputs, &split.test_ids, config)
                .map_err(wrap)?;
            Ok((prf, trained.history))
        })
        .collect();
    // first failing fold in fold order, independent of scheduling
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (per_fold, histories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(CvOutcome {
        report: MetricsReport::from_folds(name, config.averaging, per_fold)?,
        histories,
    })
}
