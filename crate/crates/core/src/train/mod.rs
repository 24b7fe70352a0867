//! Training orchestration: epochs, micro-batch gradient accumulation,
//! validation metrics, the adaptive dropout controller, early stopping and
//! best-checkpoint tracking.

mod checkpoint;
mod controller;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use controller::{composite_score, update_dropout, CompositeInputs, ControllerConstants};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{audit_batches, make_batches, BatchAuditReport, Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::loss::{class_weights_inverse_frequency, focal_loss, FocalLossConfig};
use crate::metrics::{auc_ovr_macro, precision_recall_f1, ConfusionMatrix, MetricsReport};
use crate::model::Model;
use crate::optim::{accumulate_gradients, AdamConfig, AdamState, GradMap};
use crate::rng;
use crate::tensor::{Scalar, Tensor};

/// The three named randomness sources of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub dropout: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 1,
            init: 2,
            dropout: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub micro_batch: usize,
    /// Micro-batches averaged into one optimizer step.
    pub accumulation: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    /// Focal loss focusing exponent.
    pub gamma: f64,
    pub initial_dropout: f64,
    /// Run the composite-score dropout controller after each epoch.
    pub adaptive_dropout: bool,
    /// Early stop after this many epochs without a validation-AUC
    /// improvement; `None` trains to the epoch cap.
    pub early_stop_patience: Option<usize>,
    /// Emit a training snapshot line every this many micro-batches.
    pub snapshot_every: usize,
    pub seeds: Seeds,
    pub controller: ControllerConstants,
}

impl TrainConfig {
    /// Regimen for the dilated residual classifier: micro-batch 32 with
    /// 2-step accumulation (effective 64), hard stop at 10 epochs, adaptive
    /// dropout from 0.20.
    pub fn wavenet() -> Self {
        TrainConfig {
            micro_batch: 32,
            accumulation: 2,
            max_epochs: 10,
            learning_rate: 1e-3,
            l2_lambda: 1e-4,
            gamma: 2.0,
            initial_dropout: 0.20,
            adaptive_dropout: true,
            early_stop_patience: None,
            snapshot_every: 150,
            seeds: Seeds::default(),
            controller: ControllerConstants::default(),
        }
    }

    /// Baseline regimen: batch 16, no accumulation, fixed block dropout,
    /// early stopping on validation AUC with patience 3.
    pub fn tcn() -> Self {
        TrainConfig {
            micro_batch: 16,
            accumulation: 1,
            initial_dropout: 0.005,
            adaptive_dropout: false,
            early_stop_patience: Some(3),
            ..TrainConfig::wavenet()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.micro_batch < 1 || self.accumulation < 1 || self.max_epochs < 1 {
            return Err(Error::Config(
                "micro_batch, accumulation and max_epochs must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.initial_dropout) {
            return Err(Error::Config(format!(
                "initial_dropout {} outside [0, 1)",
                self.initial_dropout
            )));
        }
        if self.gamma < 0.0 || self.learning_rate <= 0.0 || self.l2_lambda < 0.0 {
            return Err(Error::Config(
                "gamma/l2_lambda must be >= 0 and learning_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Metric snapshot of one epoch, as consumed by the dropout controller.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_auc: f64,
    pub val_loss: f64,
    pub macro_f1: f64,
    /// Dropout rate in force for the next epoch (the controller runs after
    /// validation, from epoch 2 on).
    pub dropout_rate_after: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} train_acc={:.6} val_acc={:.6} val_auc={:.6} val_loss={:.6} macro_f1={:.6} dropout_after={:.6}",
            self.epoch,
            self.train_accuracy,
            self.val_accuracy,
            self.val_auc,
            self.val_loss,
            self.macro_f1,
            self.dropout_rate_after
        )
    }
}

/// Best-so-far model by validation macro-F1 (ties keep the earlier epoch).
#[derive(Debug, Clone)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub macro_f1: f64,
    pub model: Model<f32>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub best: BestCheckpoint,
    pub audit: BatchAuditReport,
    pub stopped_early: bool,
}

/// Evaluation of a model over a fixed set of samples.
pub struct Evaluation {
    /// Row-major probability rows, one per sample.
    pub probs: Vec<f64>,
    pub labels: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
    /// Focal loss under the supplied config, when one was given.
    pub focal: Option<f64>,
}

/// Run inference over `indices` in fixed-size batches and compute the full
/// metric set. AUC lands in `report.auc` (absent if undefined).
pub fn evaluate_indices(
    model: &Model<f32>,
    data: &Dataset,
    indices: &[usize],
    focal_cfg: Option<&FocalLossConfig>,
    eval_batch: usize,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let classes = data.num_classes();
    let mut probs = Vec::with_capacity(indices.len() * classes);
    let mut labels = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(eval_batch.max(1)) {
        let (x, y) = data.batch_tensor::<f32>(chunk);
        let p = model.forward(&x)?;
        if !p.is_all_finite() {
            return Err(Error::Numeric("non-finite probabilities during evaluation".into()));
        }
        probs.extend(p.data().iter().map(|&v| v as f64));
        labels.extend(y);
    }
    let predicted: Vec<usize> = probs
        .chunks_exact(classes)
        .map(argmax)
        .collect();
    let confusion = ConfusionMatrix::from_labels(&labels, &predicted, classes)?;
    let mut report = precision_recall_f1(&confusion, &data.class_names)?;
    report.auc = auc_ovr_macro(&probs, classes, &labels).ok().map(|s| s.macro_auc);
    let focal = match focal_cfg {
        Some(cfg) => {
            let t = Tensor::<f64>::from_vec(&[labels.len(), classes], probs.clone())?;
            Some(focal_loss(&t, &labels, cfg)?)
        }
        None => None,
    };
    Ok(Evaluation {
        probs,
        labels,
        confusion,
        report,
        focal,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full training run over the dataset's train/validation splits.
///
/// Per epoch: seeded shuffle into micro-batches, gradient accumulation into
/// optimizer steps, validation metrics, the dropout controller (epoch 2
/// onward), checkpointing on macro-F1 improvement, and optional AUC-patience
/// early stopping. `sink` receives one structured line per epoch plus
/// periodic training snapshots.
pub fn train(
    model: &mut Model<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.validate()?;
    let train_idx = data.split_indices(SplitTag::Train)?;
    let val_idx = data.split_indices(SplitTag::Val)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config("train and validation splits must be non-empty".into()));
    }

    // Inverse-frequency alpha weights from the training split.
    let mut counts = vec![0usize; data.num_classes()];
    for &i in &train_idx {
        counts[data.samples[i].label as usize] += 1;
    }
    let alpha = class_weights_inverse_frequency(&counts).map_err(|_| {
        Error::Config("every class needs at least one training sample for alpha weights".into())
    })?;
    let focal_cfg = FocalLossConfig::new(cfg.gamma, alpha)?;

    let labels: Vec<u8> = data.samples.iter().map(|s| s.label).collect();
    let mut adam = AdamState::<f32>::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        l2_lambda: cfg.l2_lambda,
        ..AdamConfig::default()
    });
    let mut dropout_rng = rng::stream(cfg.seeds.dropout);
    let mut rate = cfg.initial_dropout;

    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best: Option<BestCheckpoint> = None;
    let mut audit: Option<BatchAuditReport> = None;
    let mut best_auc = f64::NEG_INFINITY;
    let mut epochs_since_auc_improvement = 0usize;
    let mut stopped_early = false;
    let mut micro_batches_seen = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let batches = make_batches(
            &train_idx,
            &labels,
            cfg.micro_batch,
            rng::mix(cfg.seeds.data, epoch as u64),
            false,
        )?;
        if epoch == 1 {
            audit = Some(audit_batches(&batches, &labels, data.num_classes()));
        }

        let mut pending: Vec<GradMap<f32>> = Vec::with_capacity(cfg.accumulation);
        let mut correct = 0usize;
        let mut seen = 0usize;
        let mut loss_sum = 0.0f64;
        let mut loss_batches = 0usize;

        for batch in &batches {
            let (x, y) = data.batch_tensor::<f32>(batch);
            let mut tape = Tape::new();
            let rec = model.forward_recorded(&mut tape, &x, true, rate, &mut dropout_rng)?;
            let loss_id = tape.focal_loss(rec.probs, &y, &focal_cfg)?;
            let loss_val = tape.value(loss_id).item()?.as_f64();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite in epoch {epoch}; aborting"
                )));
            }
            loss_sum += loss_val;
            loss_batches += 1;
            for (row, &label) in tape
                .value(rec.probs)
                .data()
                .chunks_exact(data.num_classes())
                .zip(&y)
            {
                let row64: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                if argmax(&row64) == label {
                    correct += 1;
                }
            }
            seen += y.len();

            let mut grads = tape.backward(loss_id)?;
            let mut named: GradMap<f32> = GradMap::new();
            for (name, &id) in rec.params.iter() {
                named.insert(name.clone(), grads.take_or_zeros(id));
            }
            pending.push(named);
            if pending.len() == cfg.accumulation {
                let merged = accumulate_gradients(&pending)?;
                pending.clear();
                adam.step(&mut model.params, &merged)?;
            }

            micro_batches_seen += 1;
            if cfg.snapshot_every > 0 && micro_batches_seen.is_multiple_of(cfg.snapshot_every) {
                sink(&format!(
                    "snapshot epoch={epoch} micro_batch={micro_batches_seen} step={} train_acc={:.6} train_loss={:.6}",
                    adam.step_count(),
                    correct as f64 / seen.max(1) as f64,
                    loss_sum / loss_batches.max(1) as f64,
                ));
            }
        }
        if !pending.is_empty() {
            let merged = accumulate_gradients(&pending)?;
            pending.clear();
            adam.step(&mut model.params, &merged)?;
        }

        let train_accuracy = correct as f64 / seen.max(1) as f64;
        let eval = evaluate_indices(model, data, &val_idx, Some(&focal_cfg), cfg.micro_batch)?;
        let val_auc = eval.report.auc.ok_or_else(|| {
            Error::Input("validation AUC undefined (validation split has one class)".into())
        })?;
        let val_accuracy = eval.report.accuracy;
        let val_loss = eval.focal.expect("focal config supplied");
        let macro_f1 = eval.report.macro_f1;

        if cfg.adaptive_dropout {
            if let Some(prev) = records.last() {
                let score = composite_score(
                    &CompositeInputs {
                        prev_acc: prev.val_accuracy,
                        val_acc: val_accuracy,
                        prev_auc: prev.val_auc,
                        auc: val_auc,
                        val_loss,
                        prev_loss: prev.val_loss,
                        train_acc: train_accuracy,
                    },
                    &cfg.controller,
                );
                rate = update_dropout(rate, score, &cfg.controller);
            }
        }

        let record = EpochRecord {
            epoch,
            train_accuracy,
            val_accuracy,
            val_auc,
            val_loss,
            macro_f1,
            dropout_rate_after: rate,
        };
        sink(&record.log_line());
        records.push(record);

        let improved = best.as_ref().map(|b| macro_f1 > b.macro_f1).unwrap_or(true);
        if improved {
            best = Some(BestCheckpoint {
                epoch,
                macro_f1,
                model: model.clone(),
            });
        }

        if let Some(patience) = cfg.early_stop_patience {
            if val_auc > best_auc {
                best_auc = val_auc;
                epochs_since_auc_improvement = 0;
            } else {
                epochs_since_auc_improvement += 1;
                if epochs_since_auc_improvement >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        records,
        best: best.expect("at least one epoch ran"),
        audit: audit.expect("at least one epoch ran"),
        stopped_early,
    })
}
