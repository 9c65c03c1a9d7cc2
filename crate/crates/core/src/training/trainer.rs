use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early::{Decision, EarlyStopping, IMPROVEMENT_TOLERANCE};
use super::loss::{mse_loss_var, quantile_loss_var, LossKind};
use super::optim::{OptimizerConfig, Ranger};
use crate::autograd::{Tape, Var};
use crate::data::BasinDataset;
use crate::error::{Error, Result};
use crate::models::{Batch, Forecaster, ModelConfig, ModelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
    pub seed: u64,
    /// Defaults to MSE for the LSTM and the quantile loss otherwise.
    pub loss_kind: Option<LossKind>,
    pub plain_adam: bool,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            learning_rate: 1e-3,
            lookahead_k: 6,
            lookahead_alpha: 0.5,
            seed: 0,
            loss_kind: None,
            plain_adam: false,
            grad_clip: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.patience >= self.max_epochs {
            problems.push(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(self.grad_clip > 0.0) {
            problems.push(format!("grad_clip {} must be positive", self.grad_clip));
        }
        if let Err(Error::Config(msg)) = self.optimizer().validate() {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            lookahead_k: self.lookahead_k,
            lookahead_alpha: self.lookahead_alpha,
            plain_adam: self.plain_adam,
            ..OptimizerConfig::default()
        }
    }

    /// The loss for `kind`, rejecting combinations the output head cannot
    /// serve.
    pub fn resolve_loss(&self, kind: ModelKind) -> Result<LossKind> {
        let natural = if kind.is_quantile() {
            LossKind::Quantile
        } else {
            LossKind::Mse
        };
        match self.loss_kind {
            None => Ok(natural),
            Some(k) if k == natural => Ok(k),
            Some(k) => Err(Error::Config(format!(
                "loss {k:?} does not fit the {kind} output head"
            ))),
        }
    }
}

/// Whether a model is trained against targets mapped onto (0, 1).
pub fn uses_unit_target(kind: ModelKind) -> bool {
    kind == ModelKind::Lstm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub basin_id: String,
    pub model_kind: ModelKind,
    pub num_params: usize,
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub optimizer_steps: u64,
    pub wall_time_secs: f64,
    pub param_checksum: String,
    pub config: TrainConfig,
    pub model_config: ModelConfig,
}

/// Records the loss of `model` on `batch`.
pub fn batch_loss(
    model: &Forecaster,
    tape: &mut Tape,
    batch: &Batch,
    loss: LossKind,
) -> Result<Var> {
    let out = model.forward(tape, batch)?.output;
    match loss {
        LossKind::Quantile => quantile_loss_var(tape, out, &batch.targets, &model.config.quantiles),
        LossKind::Mse => mse_loss_var(tape, out, &batch.targets),
    }
}

/// One optimizer update on `batch`; returns the loss before the update.
pub fn optimization_step(
    model: &mut Forecaster,
    optimizer: &mut Ranger,
    tape: &mut Tape,
    batch: &Batch,
    loss: LossKind,
    grad_clip: f64,
) -> Result<f64> {
    let l = batch_loss(model, tape, batch, loss)?;
    let value = tape.value(l).data()[0];
    if !value.is_finite() {
        return Err(Error::Numerical(format!("training loss became {value}")));
    }
    let grads = tape.backward(l)?;
    let param_grads = tape.param_grads(&grads);
    model.store.zero_grad();
    model.store.accumulate(&param_grads);
    let norm = model.store.grad_norm();
    if norm > grad_clip {
        model.store.scale_grads(grad_clip / norm);
    }
    optimizer.step(&mut model.store)?;
    Ok(value)
}

/// Sample-weighted mean loss over `samples` in evaluation mode.
pub fn evaluate_loss(
    model: &Forecaster,
    data: &BasinDataset,
    samples: &[usize],
    batch_size: usize,
    loss: LossKind,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("no samples to evaluate".into()));
    }
    let unit = uses_unit_target(model.kind());
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk, unit)?;
        let mut tape = Tape::new();
        let l = batch_loss(model, &mut tape, &batch, loss)?;
        total += tape.value(l).data()[0] * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Shuffled minibatches of `samples`, every sample exactly once.
pub fn epoch_batches(
    samples: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut order = samples.to_vec();
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Trains on the training split with per-epoch validation and early
/// stopping, then restores the best epoch's parameters. On a numerical
/// failure the best parameters seen so far are restored before the error is
/// returned.
pub fn train(
    model: &mut Forecaster,
    data: &BasinDataset,
    config: &TrainConfig,
) -> Result<TrainingReport> {
    config.validate()?;
    let loss = config.resolve_loss(model.kind())?;
    let train_idx: Vec<usize> = data.splits.train.clone().collect();
    let val_idx: Vec<usize> = data.splits.val.clone().collect();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Contract(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let unit = uses_unit_target(model.kind());
    let started = Instant::now();
    let mut optimizer = Ranger::new(&model.store, config.optimizer())?;
    let mut stopper = EarlyStopping::new(config.patience, IMPROVEMENT_TOLERANCE);
    let mut best = model.store.flat_values();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let mut sum = 0.0;
        for chunk in epoch_batches(&train_idx, config.batch_size, config.seed, epoch) {
            let batch = data.batch(&chunk, unit)?;
            let mut tape = Tape::training(config.seed, optimizer.steps());
            match optimization_step(
                model,
                &mut optimizer,
                &mut tape,
                &batch,
                loss,
                config.grad_clip,
            ) {
                Ok(l) => sum += l * chunk.len() as f64,
                Err(e) => {
                    model.store.set_flat_values(&best)?;
                    return Err(e);
                }
            }
        }
        let train_loss = sum / train_idx.len() as f64;
        let val_loss = evaluate_loss(model, data, &val_idx, config.batch_size, loss)?;
        if !val_loss.is_finite() {
            model.store.set_flat_values(&best)?;
            return Err(Error::Numerical(format!(
                "validation loss became {val_loss} at epoch {epoch}"
            )));
        }
        debug!(
            "{} {} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}",
            data.basin_id,
            model.kind()
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let decision = stopper.observe(val_loss);
        if stopper.improved() {
            best = model.store.flat_values();
        }
        if let Decision::Stop { .. } = decision {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    model.store.set_flat_values(&best)?;
    let report = TrainingReport {
        basin_id: data.basin_id.clone(),
        model_kind: model.kind(),
        num_params: model.num_params(),
        stopped_epoch: epochs.len(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        epochs,
        stop_reason,
        optimizer_steps: optimizer.steps(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        param_checksum: model.store.checksum(),
        config: config.clone(),
        model_config: model.config.clone(),
    };
    info!(
        "{} {}: best epoch {} of {}, val loss {:.6}",
        report.basin_id,
        report.model_kind,
        report.best_epoch,
        report.stopped_epoch,
        report.best_val_loss
    );
    Ok(report)
}
