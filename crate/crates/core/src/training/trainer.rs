use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
use super::loss::{variant_loss, LossWeights};
use crate::diff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, EpochLoss, ModelParams, TrainMetadata, Variant};
use crate::signal::{sample_gains_with, GainVector, SourceSet, TRAIN_GAIN_RANGE_DB};

/// Salt separating the validation-gain stream from the training stream.
const VAL_GAIN_SALT: u64 = 0x5641_4c5f_4741_494e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub loss_weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub segment_s: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub gain_range_db: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Model1,
            loss_weights: LossWeights::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: 8,
            segment_s: 1.0,
            max_epochs: 200,
            patience: 10,
            gain_range_db: TRAIN_GAIN_RANGE_DB,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and max epochs must be positive"));
        }
        if !(self.segment_s > 0.0) {
            return Err(Error::invalid("segment length must be positive"));
        }
        if !(self.gain_range_db >= 0.0) || !self.gain_range_db.is_finite() {
            return Err(Error::invalid("gain range must be finite and non-negative"));
        }
        if self.variant != Variant::Baseline {
            self.loss_weights.validate()?;
        }
        Ok(())
    }

    /// Weights that actually drive the objective; the baseline always uses source terms only.
    pub fn effective_weights(&self) -> LossWeights {
        match self.variant {
            Variant::Baseline => LossWeights::SOURCE_ONLY,
            _ => self.loss_weights,
        }
    }
}

/// Owns the parameters and optimizer state across steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams,
    pub state: OptimizerState,
    pub variant: Variant,
    pub weights: LossWeights,
    pub learning_rate: f64,
}

/// Loss value and parameter gradients (canonical order) of one batch.
pub fn loss_and_grads(
    params: &ModelParams,
    variant: Variant,
    weights: LossWeights,
    batch: &[SourceSet],
    gains: &[GainVector],
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut acc: Vec<Tensor> = params.tensors.leaves().iter().map(|t| Tensor::zeros(t.shape())).collect();
    // one graph per item keeps peak memory at a single segment; the mean is unchanged
    for (i, set) in batch.iter().enumerate() {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let root = variant_loss(
            &mut g,
            variant,
            params,
            &bound,
            std::slice::from_ref(set),
            gains.get(i..i + 1).unwrap_or(&[]),
            weights,
        )?;
        total += scale * g.scalar_value(root);
        let grads = g.backward(root)?;
        for (a, id) in acc.iter_mut().zip(bound.leaves()) {
            if let Some(gt) = grads.get(*id) {
                for (x, y) in a.data_mut().iter_mut().zip(gt.data()) {
                    *x += scale * y;
                }
            }
        }
    }
    Ok((total, acc))
}

/// Loss of a batch without building gradients.
pub fn evaluate_loss(
    params: &ModelParams,
    variant: Variant,
    weights: LossWeights,
    batch: &[SourceSet],
    gains: &[GainVector],
) -> Result<f64> {
    let mut total = 0.0;
    for (set, gv) in batch.iter().zip(gains) {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let root = variant_loss(
            &mut g,
            variant,
            params,
            &bound,
            std::slice::from_ref(set),
            std::slice::from_ref(gv),
            weights,
        )?;
        total += g.scalar_value(root);
    }
    Ok(total / batch.len() as f64)
}

impl Trainer {
    pub fn new(params: ModelParams, variant: Variant, weights: LossWeights, learning_rate: f64) -> Self {
        let state = OptimizerState::new(params.tensors.leaves());
        Trainer {
            params,
            state,
            variant,
            weights,
            learning_rate,
        }
    }

    /// One optimizer step on `batch`; returns the pre-update loss.
    pub fn step(&mut self, batch: &[SourceSet], gains: &[GainVector]) -> Result<f64> {
        if gains.len() != batch.len() {
            return Err(Error::invalid(format!("{} gain vectors for {} items", gains.len(), batch.len())));
        }
        let (loss, grads) = loss_and_grads(&self.params, self.variant, self.weights, batch, gains)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {loss}")));
        }
        let mut leaves = self.params.tensors.leaves_mut();
        adam_step(&mut leaves, &grads, &mut self.state, self.learning_rate)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_flag: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub stop_reason: StopReason,
    /// Diagnostic when training diverged.
    pub failure: Option<String>,
}

/// Validation gains, drawn once per run so every epoch is scored on the same remixes.
pub fn frozen_validation_gains(k: usize, n: usize, seed: u64, range_db: f64) -> Vec<GainVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ VAL_GAIN_SALT);
    (0..n).map(|_| sample_gains_with(&mut rng, k, range_db)).collect()
}

/// Full training run with early stopping on the validation loss.
pub fn train(
    cfg: &TrainConfig,
    initial: ModelParams,
    labels: Vec<String>,
    train_set: &[SourceSet],
    val_set: &[SourceSet],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let k = initial.config.k;
    if labels.len() != k {
        return Err(Error::invalid(format!("{} labels for {k} sources", labels.len())));
    }
    let weights = cfg.effective_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let val_gains = frozen_validation_gains(k, val_set.len(), cfg.seed, cfg.gain_range_db);

    let mut trainer = Trainer::new(initial.clone(), cfg.variant, weights, cfg.learning_rate);
    let mut best_params = initial;
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut failure = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SourceSet> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let gains: Vec<GainVector> = (0..batch.len())
                .map(|_| sample_gains_with(&mut rng, k, cfg.gain_range_db))
                .collect();
            match trainer.step(&batch, &gains) {
                Ok(l) => {
                    loss_sum += l;
                    batches += 1;
                }
                Err(e) => {
                    log::warn!("epoch {epoch}: {e}; keeping epoch {best_epoch} parameters");
                    stop_reason = StopReason::Diverged;
                    failure = Some(e.to_string());
                    break 'epochs;
                }
            }
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = evaluate_loss(&trainer.params, cfg.variant, weights, val_set, &val_gains)?;
        if !val_loss.is_finite() || !trainer.params.is_finite() {
            stop_reason = StopReason::Diverged;
            failure = Some(format!("validation loss became {val_loss} at epoch {epoch}"));
            break;
        }
        let improved = val_loss < best_val;
        if improved {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = trainer.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4}{}", if improved { " *" } else { "" });
        history.push(HistoryRow {
            epoch,
            train_loss,
            val_loss,
            best_flag: improved,
        });
        if since_best >= cfg.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let metadata = TrainMetadata {
        seed: cfg.seed,
        best_epoch,
        epochs_run: history.len(),
        stop_reason: stop_reason.as_str().to_string(),
        loss_curve: history
            .iter()
            .map(|h| EpochLoss {
                epoch: h.epoch,
                train_loss: h.train_loss,
                val_loss: h.val_loss,
            })
            .collect(),
    };
    let mut checkpoint = Checkpoint::new(cfg.variant, cfg.loss_weights, labels, best_params);
    checkpoint.metadata = metadata;
    Ok(TrainOutcome {
        checkpoint,
        history,
        stop_reason,
        failure,
    })
}

/// Writes `epoch,train_loss,val_loss,best_flag` rows.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for row in history {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
