//! Adaptive dropout controller.
//!
//! After each validation pass (from the second epoch on), a composite score
//! aggregates epoch-over-epoch movement of validation accuracy, AUC and loss
//! plus the train/validation generalization gap; positive scores indicate
//! stagnation or overfitting and push the dropout rate up. The raw update
//! diverges when validation accuracy barely moves (the stagnation term is a
//! reciprocal), so the score and the rate are both clamped.

use serde::{Deserialize, Serialize};

/// Fixed constants of the composite score and the update rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConstants {
    /// Acceptable generalization gap subtracted from the relative gap term.
    pub baseline_gap: f64,
    /// Weight on the accuracy-movement term.
    pub weight_acc: f64,
    /// Weight on the AUC-movement term.
    pub weight_auc: f64,
    /// Weight on the loss-movement term.
    pub weight_loss: f64,
    /// Weight on the generalization-gap term.
    pub weight_gap: f64,
    /// Accuracy movements below this feed the stagnation term directly.
    pub no_learn_threshold: f64,
    /// Placeholder divisor used while accuracy still moves.
    pub no_learn_else: f64,
    /// Numerator of the stagnation term.
    pub stagnation_numerator: f64,
    /// Step size from score to dropout-rate change.
    pub update_coefficient: f64,
    /// Scores are clamped to +-this before the update.
    pub score_clamp: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Default for ControllerConstants {
    fn default() -> Self {
        ControllerConstants {
            baseline_gap: 0.02,
            weight_acc: 1.5,
            weight_auc: 0.8,
            weight_loss: 1.0,
            weight_gap: 1.0,
            no_learn_threshold: 0.01,
            no_learn_else: 20.0,
            stagnation_numerator: 25.0,
            update_coefficient: 0.05,
            score_clamp: 2.0,
            min_rate: 0.05,
            max_rate: 0.50,
        }
    }
}

/// Metric snapshot pair feeding one controller update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeInputs {
    pub prev_acc: f64,
    pub val_acc: f64,
    pub prev_auc: f64,
    pub auc: f64,
    pub val_loss: f64,
    pub prev_loss: f64,
    pub train_acc: f64,
}

/// Composite score:
///
/// ```text
/// 1.5*(prev_acc - val_acc) + 0.8*(prev_auc - auc) + (val_loss - prev_loss)
///   + (rel_gap - baseline_gap) + 25 / val_no_learn
/// ```
///
/// where `rel_gap = (max(train_acc, 1e-8) - val_acc) / max(train_acc, 1e-8)`
/// and `val_no_learn = |val_acc - prev_acc|` when that is below the threshold,
/// else 20. A fully stagnant run (`val_no_learn = 0`) yields +infinity, which
/// the update rule treats as the upper score clamp.
pub fn composite_score(inputs: &CompositeInputs, consts: &ControllerConstants) -> f64 {
    let train_acc = inputs.train_acc.max(1e-8);
    let rel_gap = (train_acc - inputs.val_acc) / train_acc;
    let delta = (inputs.val_acc - inputs.prev_acc).abs();
    let val_no_learn = if delta < consts.no_learn_threshold {
        delta
    } else {
        consts.no_learn_else
    };
    consts.weight_acc * (inputs.prev_acc - inputs.val_acc)
        + consts.weight_auc * (inputs.prev_auc - inputs.auc)
        + consts.weight_loss * (inputs.val_loss - inputs.prev_loss)
        + consts.weight_gap * (rel_gap - consts.baseline_gap)
        + consts.stagnation_numerator / val_no_learn
}

/// New dropout rate: `clamp(current + 0.05 * clamp(score, -2, +2), 0.05, 0.50)`.
/// Negative scores decrease the rate symmetrically.
pub fn update_dropout(current: f64, score: f64, consts: &ControllerConstants) -> f64 {
    let clamped = score.clamp(-consts.score_clamp, consts.score_clamp);
    (current + consts.update_coefficient * clamped).clamp(consts.min_rate, consts.max_rate)
}
