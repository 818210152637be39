use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{adam_step, bce_loss, AdamState};
use crate::data::{iterate_batches, Instance};
use crate::eval::auc;
use crate::model::{backward, forward, init_params, predict_all, HyperParams, Mode, ModelParams};
use crate::numerics::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without a validation-AUC improvement before stopping; 0 disables.
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Run seeds sequentially.
    pub deterministic: bool,
    /// Worker cap for parallel seeds.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 1024,
            learning_rate: 1e-3,
            patience: 5,
            seeds: vec![1, 2, 3, 4, 5],
            deterministic: false,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            problems.push(format!("learning_rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperParams(problems))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    /// Mean data loss (BCE, without the penalty) over the epoch's training batches.
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_logloss: f64,
    pub beta: f64,
    /// Deep-branch α_j in order, then α_SA, α_FF.
    pub alphas: Vec<f64>,
}

impl EpochLog {
    pub fn alpha_l2norm(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// One seed's training run.
#[derive(Clone, Debug)]
pub struct SeedRun<T> {
    pub seed: u64,
    pub logs: Vec<EpochLog>,
    /// 1-based epoch whose parameters are in `best_params`.
    pub best_epoch: usize,
    pub best_params: ModelParams<T>,
}

impl<T> SeedRun<T> {
    pub fn best_log(&self) -> &EpochLog {
        &self.logs[self.best_epoch - 1]
    }
}

/// Validation AUC and log loss in eval mode.
pub fn evaluate_split<T: Real>(
    instances: &[Instance],
    params: &ModelParams<T>,
    hp: &HyperParams,
    chunk: usize,
) -> Result<(f64, f64)> {
    let probs: Vec<f64> = predict_all(instances, params, hp, chunk)?
        .into_iter()
        .map(Real::as_f64)
        .collect();
    let labels: Vec<u8> = instances.iter().map(|x| x.label).collect();
    Ok((auc(&probs, &labels)?, bce_loss(&probs, &labels)?))
}

fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// One pass over `train` (forward → loss → backward → Adam per batch), then
/// validation metrics.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<T: Real>(
    params: &mut ModelParams<T>,
    state: &mut AdamState<T>,
    train: &[Instance],
    validation: &[Instance],
    hp: &HyperParams,
    cfg: &TrainConfig,
    seed: u64,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpochLog> {
    let lr = T::lit(cfg.learning_rate);
    let mut loss_sum = 0.0;
    for (b, batch) in iterate_batches(train, cfg.batch_size, Some(seed), epoch).iter().enumerate() {
        let (probs, trace) = forward(&batch.instances, params, hp, Mode::Train, rng)?;
        let labels = batch.labels();
        let loss = bce_loss(&probs, &labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b });
        }
        loss_sum += loss.as_f64() * batch.len() as f64;
        let grads = backward(&trace, &labels, params, hp)?;
        adam_step(params, &grads, state, lr)?;
    }
    let (val_auc, val_logloss) = evaluate_split(validation, params, hp, cfg.batch_size)?;
    Ok(EpochLog {
        seed,
        epoch: epoch + 1,
        train_loss: loss_sum / train.len().max(1) as f64,
        val_auc,
        val_logloss,
        beta: params.combine.beta.as_f64(),
        alphas: params.alphas().into_iter().map(Real::as_f64).collect(),
    })
}

/// Trains one seed with early stopping on validation AUC and restores the
/// best epoch's parameters.
pub fn fit_seed<T: Real>(
    train: &[Instance],
    validation: &[Instance],
    hp: &HyperParams,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SeedRun<T>> {
    let mut params = init_params::<T>(hp, seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = dropout_rng(seed);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let log = train_epoch(&mut params, &mut state, train, validation, hp, cfg, seed, epoch, &mut rng)?;
        let improved = best.as_ref().is_none_or(|(auc, _, _)| log.val_auc > *auc);
        if improved {
            best = Some((log.val_auc, log.epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        logs.push(log);
        if cfg.patience > 0 && since_best >= cfg.patience {
            break;
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(SeedRun {
        seed,
        logs,
        best_epoch,
        best_params,
    })
}

/// Runs every configured seed. Seeds run in parallel unless the config is
/// deterministic; results are returned in seed order either way.
pub fn fit<T: Real>(
    train: &[Instance],
    validation: &[Instance],
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<Vec<SeedRun<T>>> {
    hp.validate()?;
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Dataset("training and validation splits must be non-empty".into()));
    }
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads).max(1);
    if cfg.deterministic || threads == 1 || cfg.seeds.len() == 1 {
        return cfg
            .seeds
            .iter()
            .map(|&s| fit_seed(train, validation, hp, cfg, s))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| fit_seed(train, validation, hp, cfg, s))
            .collect()
    })
}
