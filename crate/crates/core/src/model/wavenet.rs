//! Dilated causal residual classifier with a cumulative skip stream.
//!
//! Entry 1x1 conv lifts the single input channel to `filters`; each residual
//! block is a dilated causal conv -> swish -> dropout whose output is added
//! both to the running skip sum and to the block input. The skip sum feeds a
//! 1x1 conv head (swish between the two convs), global average pooling and
//! softmax.

use serde::{Deserialize, Serialize};

use super::{he_uniform, ParamIds, ParamStore};
use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::nn::ConvSpec;
use crate::rng::ChaCha8Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveNetConfig {
    /// One residual block per entry.
    pub dilations: Vec<usize>,
    pub filters: usize,
    pub kernel_size: usize,
    pub num_classes: usize,
    pub input_length: usize,
    /// Initial rate for the adaptive dropout controller.
    pub dropout_rate: f64,
    pub l2_lambda: f64,
}

impl Default for WaveNetConfig {
    fn default() -> Self {
        WaveNetConfig {
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
            filters: 32,
            kernel_size: 3,
            num_classes: 4,
            input_length: 15000,
            dropout_rate: 0.20,
            l2_lambda: 1e-4,
        }
    }
}

impl WaveNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dilations.is_empty() || self.dilations.iter().any(|&d| d < 1) {
            return Err(Error::Config(
                "dilations must be non-empty and strictly positive".into(),
            ));
        }
        if self.filters < 1 || self.kernel_size < 1 {
            return Err(Error::Config("filters and kernel_size must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config("l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

pub(super) fn build_params<T: Scalar>(
    cfg: &WaveNetConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ParamStore<T>> {
    let f = cfg.filters;
    let mut store = ParamStore::new();
    store.push("entry.w", he_uniform(&[f, 1, 1], rng), true)?;
    store.push("entry.b", Tensor::zeros(&[f]), false)?;
    for i in 0..cfg.dilations.len() {
        store.push(
            &format!("block{i}.conv.w"),
            he_uniform(&[f, f, cfg.kernel_size], rng),
            true,
        )?;
        store.push(&format!("block{i}.conv.b"), Tensor::zeros(&[f]), false)?;
    }
    store.push("head1.w", he_uniform(&[f, f, 1], rng), true)?;
    store.push("head1.b", Tensor::zeros(&[f]), false)?;
    store.push("head2.w", he_uniform(&[cfg.num_classes, f, 1], rng), true)?;
    store.push("head2.b", Tensor::zeros(&[cfg.num_classes]), false)?;
    Ok(store)
}

pub(super) fn forward<T: Scalar>(
    cfg: &WaveNetConfig,
    ids: &ParamIds,
    tape: &mut Tape<T>,
    x: ValueId,
    training: bool,
    dropout_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ValueId, ValueId)> {
    let f = cfg.filters;
    let mut cur = tape.conv1d(
        x,
        ids.get("entry.w")?,
        ids.get("entry.b")?,
        ConvSpec::causal(1, f, 1, 1),
    )?;

    let mut skip: Option<ValueId> = None;
    for (i, &d) in cfg.dilations.iter().enumerate() {
        let conv = tape.conv1d(
            cur,
            ids.get(&format!("block{i}.conv.w"))?,
            ids.get(&format!("block{i}.conv.b"))?,
            ConvSpec::causal(f, f, cfg.kernel_size, d),
        )?;
        let act = tape.swish(conv);
        // Dropout regularizes each block's skip contribution; the residual
        // trunk stays deterministic so high adaptive rates cannot starve
        // downstream blocks of signal.
        let dropped = tape.dropout(act, dropout_rate, training, rng)?;
        skip = Some(match skip {
            None => dropped,
            Some(s) => tape.add(s, dropped)?,
        });
        cur = tape.add(cur, act)?;
    }

    let skip_sum = skip.expect("validated non-empty dilation list");
    let h1 = tape.conv1d(
        skip_sum,
        ids.get("head1.w")?,
        ids.get("head1.b")?,
        ConvSpec::causal(f, f, 1, 1),
    )?;
    let a1 = tape.swish(h1);
    let prepool = tape.conv1d(
        a1,
        ids.get("head2.w")?,
        ids.get("head2.b")?,
        ConvSpec::causal(f, cfg.num_classes, 1, 1),
    )?;
    let pooled = tape.global_average_pool(prepool)?;
    let probs = tape.softmax(pooled)?;
    Ok((prepool, probs))
}
