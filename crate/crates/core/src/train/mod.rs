//! Two-phase training: heatmap pretraining of the encoders, then
//! classification with early stopping.

mod losses;

pub use losses::{binary_ce, categorical_ce, LOG_EPS};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{argmax_cell, softmax, GridCell};
use crate::error::{Error, Result};
use crate::model::{
    Checkpoint, CsGaze, ForwardOptions, ModelConfig, Modalities, PhaseTag, PreparedDyad, PreparedGaze, FACE_PREFIX,
    FUSION_PREFIX, HEATMAP_PREFIX, SCENE_PREFIX, TEXT_PREFIX,
};
use crate::nn::{Adam, Grads, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pretrain,
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    HeatmapMse,
    CategoricalCe,
    BinaryCe,
}

/// Quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monitor {
    #[default]
    ValidationLoss,
    ValidationF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub monitor: Monitor,
    /// Keep face and scene encoders fixed during classification.
    pub freeze_encoders: bool,
    /// Allow classification training without pretrained encoders.
    pub from_scratch: bool,
    pub fixed_equal_alpha: bool,
    pub modalities: Modalities,
    /// Samples per gradient work unit; fixed so results do not depend on the
    /// number of threads.
    pub grad_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::classify()
    }
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            learning_rate: 0.001,
            batch_size: 128,
            max_epochs: 10,
            early_stop_patience: 5,
            validation_fraction: 0.10,
            loss: LossKind::HeatmapMse,
            seed: 0,
            monitor: Monitor::ValidationLoss,
            freeze_encoders: false,
            from_scratch: false,
            fixed_equal_alpha: false,
            modalities: Modalities::ALL,
            grad_chunk: 16,
        }
    }

    pub fn classify() -> Self {
        TrainConfig {
            phase: Phase::Classify,
            max_epochs: 200,
            loss: LossKind::CategoricalCe,
            ..TrainConfig::pretrain()
        }
    }

    /// Binary LAEO setting: binary cross-entropy and α fixed at 0.5/0.5.
    pub fn binary() -> Self {
        TrainConfig {
            loss: LossKind::BinaryCe,
            fixed_equal_alpha: true,
            ..TrainConfig::classify()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie strictly between 0 and 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("early_stop_patience", "must be at least 1"));
        }
        if self.batch_size == 0 || self.grad_chunk == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size", "batch size, chunk and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        let expected = match self.phase {
            Phase::Pretrain => matches!(self.loss, LossKind::HeatmapMse),
            Phase::Classify => !matches!(self.loss, LossKind::HeatmapMse),
        };
        if !expected {
            return Err(Error::invalid("loss", format!("{:?} does not fit phase {:?}", self.loss, self.phase)));
        }
        Ok(())
    }

    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            modalities: self.modalities,
            fixed_equal_alpha: self.fixed_equal_alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean heatmap argmax error in cells (pretraining) or macro F1.
    pub val_metric: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phase: Phase,
    pub metric: String,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub steps: u64,
}

impl TrainLog {
    /// One JSON object per epoch, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("plain struct"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "phase": self.phase,
            "metric": self.metric,
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "steps": self.steps,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }
}

/// Patience-based stopping on a lower-is-better quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records an epoch's value; returns true when it is a new best.
    pub fn update(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Seeded split: the first `fraction` of a shuffled index list is the
/// validation set (at least one sample, at most `n − 1`).
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("data", "need at least two samples to split"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    Ok((train, val))
}

fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0000_0000 ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Summed loss and gradient over `batch`, computed in fixed-size chunks
/// (possibly in parallel) and reduced in chunk order.
fn batch_gradient<T, F>(model: &CsGaze, batch: &[&T], chunk: usize, f: F) -> Result<(f64, Grads)>
where
    T: Sync,
    F: Fn(&CsGaze, &T, &mut Grads) -> Result<f64> + Sync,
{
    let parts: Vec<(f64, Grads)> = batch
        .par_chunks(chunk)
        .map(|c| {
            let mut g = Grads::zeros_like(&model.store);
            let mut loss = 0.0;
            for s in c {
                loss += f(model, s, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = Grads::zeros_like(&model.store);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    Ok((loss, total))
}

/// Mean classification loss and gradient of one batch.
pub fn dyad_batch_gradient(model: &CsGaze, batch: &[&PreparedDyad], opts: ForwardOptions, chunk: usize) -> Result<(f64, Grads)> {
    let (loss, mut g) = batch_gradient(model, batch, chunk, |m, s, g| {
        Ok(m.dyad_loss_and_grad(s, opts, Some(g))?.0)
    })?;
    g.scale(1.0 / batch.len() as f64);
    Ok((loss / batch.len() as f64, g))
}

/// Mean heatmap loss and gradient of one batch.
pub fn gaze_batch_gradient(model: &CsGaze, batch: &[&PreparedGaze], chunk: usize) -> Result<(f64, Grads)> {
    let (loss, mut g) = batch_gradient(model, batch, chunk, |m, s, g| m.gaze_loss_and_grad(s, Some(g)))?;
    g.scale(1.0 / batch.len() as f64);
    Ok((loss / batch.len() as f64, g))
}

/// Mean heatmap loss and mean argmax error (in cells) over `data`.
pub fn evaluate_heatmaps(model: &CsGaze, data: &[&PreparedGaze]) -> Result<(f64, f64)> {
    let rows: Vec<(f64, f64)> = data
        .par_iter()
        .map(|s| {
            let loss = model.gaze_loss_and_grad(s, None)?;
            let (out, _) = model.predict_heatmap(s)?;
            let err = argmax_cell(&out).distance(&GridCell::of_point(s.gaze_point));
            Ok((loss, err))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    Ok((
        rows.iter().map(|r| r.0).sum::<f64>() / n,
        rows.iter().map(|r| r.1).sum::<f64>() / n,
    ))
}

/// Mean loss, macro F1 and predicted classes over labelled `data`.
pub fn evaluate_dyads(model: &CsGaze, data: &[&PreparedDyad], opts: ForwardOptions) -> Result<(f64, f64)> {
    let rows: Vec<(f64, usize, usize)> = data
        .par_iter()
        .map(|s| {
            let (loss, trace) = model.dyad_loss_and_grad(s, opts, None)?;
            let pred = crate::data::argmax(&softmax(&trace.logits));
            Ok((loss, pred, s.label.expect("checked by the loss")))
        })
        .collect::<Result<_>>()?;
    let loss = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    let preds: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
    let f1 = crate::eval::f1_per_class(&preds, &labels, model.config().num_classes)?;
    Ok((loss, f1.iter().sum::<f64>() / f1.len() as f64))
}

fn trainable(store: &ParamStore, cfg: &TrainConfig) -> Vec<ParamId> {
    let mut prefixes = match cfg.phase {
        Phase::Pretrain => vec![FACE_PREFIX, SCENE_PREFIX, HEATMAP_PREFIX],
        Phase::Classify => vec![TEXT_PREFIX, FUSION_PREFIX],
    };
    if cfg.phase == Phase::Classify && !cfg.freeze_encoders {
        prefixes.extend([FACE_PREFIX, SCENE_PREFIX]);
    }
    store
        .ids_with_prefix(&prefixes)
        .into_iter()
        .filter(|id| !(cfg.fixed_equal_alpha && store.tensor(*id).name == "fusion.alpha_logits"))
        .collect()
}

/// Applies one optimizer step, restoring the last good parameters and
/// failing when the loss or gradient is not finite.
fn guarded_step(model: &mut CsGaze, opt: &mut Adam, loss: f64, grads: &Grads, epoch: usize) -> Result<()> {
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Training {
            epoch,
            message: format!("non-finite loss or gradient (loss = {loss}); parameters restored to the last good step"),
        });
    }
    let before = model.store.clone();
    opt.step(&mut model.store, grads);
    if !model.store.all_finite() {
        model.store = before;
        return Err(Error::Training {
            epoch,
            message: "non-finite parameters after update; restored the last good step".into(),
        });
    }
    Ok(())
}

/// Phase 1: fits encoders and heatmap head to gaze targets by per-cell MSE.
/// Runs exactly `max_epochs` epochs and returns the final parameters.
pub fn pretrain_phase1(model: &mut CsGaze, data: &[PreparedGaze], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if cfg.phase != Phase::Pretrain {
        return Err(Error::invalid("phase", "pretrain_phase1 needs phase = pretrain"));
    }
    let (train, val) = validation_split(data.len(), cfg.validation_fraction, cfg.seed)?;
    let val_refs: Vec<&PreparedGaze> = val.iter().map(|&i| &data[i]).collect();
    let mut opt = Adam::new(&model.store, trainable(&model.store, cfg), cfg.learning_rate);
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let order = epoch_order(&train, cfg.seed, epoch);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&PreparedGaze> = batch.iter().map(|&i| &data[i]).collect();
            let (loss, g) = gaze_batch_gradient(model, &refs, cfg.grad_chunk)?;
            guarded_step(model, &mut opt, loss, &g, epoch)?;
            sum += loss * refs.len() as f64;
        }
        let (val_loss, val_err) = evaluate_heatmaps(model, &val_refs)?;
        log::info!("pretrain epoch {epoch}: train {:.5} val {val_loss:.5} argmax error {val_err:.2}", sum / train.len() as f64);
        epochs.push(EpochRecord {
            epoch,
            train_loss: sum / train.len() as f64,
            val_loss,
            val_metric: val_err,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainLog {
        phase: Phase::Pretrain,
        metric: "heatmap_argmax_error".into(),
        best_epoch: cfg.max_epochs,
        epochs,
        stop_reason: StopReason::MaxEpochs,
        steps: opt.steps(),
    })
}

/// Builds the phase-2 model: encoders from a pretrained checkpoint, text
/// and fusion parameters freshly initialised from `seed`.
pub fn prepare_phase2(pretrained: Option<&Checkpoint>, config: ModelConfig, seed: u64, cfg: &TrainConfig) -> Result<CsGaze> {
    let mut model = CsGaze::new(config, seed)?;
    match pretrained {
        Some(ck) if ck.phase == PhaseTag::PretrainComplete || cfg.from_scratch => model.transfer_encoders(&ck.model)?,
        Some(ck) => {
            return Err(Error::Checkpoint(format!(
                "expected a completed pretraining checkpoint, found phase {:?}",
                ck.phase
            )))
        }
        None if cfg.from_scratch => {}
        None => {
            return Err(Error::Checkpoint(
                "classification needs a pretrained checkpoint unless from_scratch is set".into(),
            ))
        }
    }
    Ok(model)
}

/// Phase 2: classification with early stopping on the monitored quantity.
/// The model is left holding the best-validation parameters.
pub fn train_phase2(model: &mut CsGaze, data: &[PreparedDyad], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if cfg.phase != Phase::Classify {
        return Err(Error::invalid("phase", "train_phase2 needs phase = classify"));
    }
    let n_classes = model.config().num_classes;
    if cfg.loss == LossKind::BinaryCe && n_classes != 2 {
        return Err(Error::invalid("loss", "binary cross-entropy needs a two-class model"));
    }
    let opts = cfg.forward_options();
    let (train, val) = validation_split(data.len(), cfg.validation_fraction, cfg.seed)?;
    let mut counts = vec![0usize; n_classes];
    for &i in &train {
        let label = data[i]
            .label
            .ok_or_else(|| Error::invalid("label", format!("{} is unlabelled", data[i].sample_id)))?;
        if label >= n_classes {
            return Err(Error::invalid("label", format!("class {label} out of range")));
        }
        counts[label] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            log::warn!("class {c} has no training samples");
        }
    }
    let val_refs: Vec<&PreparedDyad> = val.iter().map(|&i| &data[i]).collect();
    let mut opt = Adam::new(&model.store, trainable(&model.store, cfg), cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best = model.store.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let order = epoch_order(&train, cfg.seed, epoch);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&PreparedDyad> = batch.iter().map(|&i| &data[i]).collect();
            let (loss, g) = dyad_batch_gradient(model, &refs, opts, cfg.grad_chunk)?;
            guarded_step(model, &mut opt, loss, &g, epoch)?;
            sum += loss * refs.len() as f64;
        }
        let (val_loss, val_f1) = evaluate_dyads(model, &val_refs, opts)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite validation loss".into(),
            });
        }
        let watched = match cfg.monitor {
            Monitor::ValidationLoss => val_loss,
            Monitor::ValidationF1 => -val_f1,
        };
        if stopper.update(epoch, watched) {
            best = model.store.clone();
        }
        log::info!("classify epoch {epoch}: train {:.5} val {val_loss:.5} macro F1 {val_f1:.3}", sum / train.len() as f64);
        epochs.push(EpochRecord {
            epoch,
            train_loss: sum / train.len() as f64,
            val_loss,
            val_metric: val_f1,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    model.store = best;
    Ok(TrainLog {
        phase: Phase::Classify,
        metric: "macro_f1".into(),
        epochs,
        stop_reason,
        best_epoch: stopper.best_epoch(),
        steps: opt.steps(),
    })
}
