//! Temporal convolutional baseline.
//!
//! A stack of residual blocks, one per dilation rate. Each block runs two
//! weight-normalized causal convs (ReLU, fixed dropout after each), adds the
//! residual through a 1x1 projection when channel counts differ, then applies
//! layer normalization. Head mirrors the other architecture with ReLU.

use serde::{Deserialize, Serialize};

use super::{he_uniform, ParamIds, ParamStore, LAYER_NORM_EPS};
use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::nn::ConvSpec;
use crate::rng::ChaCha8Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcnConfig {
    /// One residual block per entry; both convs in a block share its rate.
    pub dilations: Vec<usize>,
    pub filters: usize,
    pub kernel_size: usize,
    /// Fixed at two convolutions per block.
    pub convs_per_block: usize,
    /// Fixed dropout applied inside every block.
    pub block_dropout: f64,
    pub num_classes: usize,
    pub l2_lambda: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig {
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
            filters: 8,
            kernel_size: 2,
            convs_per_block: 2,
            block_dropout: 0.005,
            num_classes: 4,
            l2_lambda: 1e-4,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dilations.is_empty() || self.dilations.iter().any(|&d| d < 1) {
            return Err(Error::Config(
                "dilations must be non-empty and strictly positive".into(),
            ));
        }
        if self.convs_per_block != 2 {
            return Err(Error::Config(
                "blocks contain exactly two convolutions".into(),
            ));
        }
        if self.filters < 1 || self.kernel_size < 1 {
            return Err(Error::Config("filters and kernel_size must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.block_dropout) {
            return Err(Error::Config(format!(
                "block_dropout {} outside [0, 1)",
                self.block_dropout
            )));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config("l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Weight-normalized conv parameters: direction `v`, per-filter gain `g`
/// initialized to `||v_f||` so the effective kernel starts equal to `v`.
fn push_wn_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    cout: usize,
    cin: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let v: Tensor<T> = he_uniform(&[cout, cin, k], rng);
    let slice = cin * k;
    let gains: Vec<T> = (0..cout)
        .map(|f| {
            v.data()[f * slice..(f + 1) * slice]
                .iter()
                .fold(T::zero(), |a, &e| a + e * e)
                .sqrt()
        })
        .collect();
    store.push(&format!("{prefix}.v"), v, true)?;
    store.push(&format!("{prefix}.g"), Tensor::from_vec(&[cout], gains)?, false)?;
    store.push(&format!("{prefix}.b"), Tensor::zeros(&[cout]), false)?;
    Ok(())
}

pub(super) fn build_params<T: Scalar>(cfg: &TcnConfig, rng: &mut ChaCha8Rng) -> Result<ParamStore<T>> {
    let f = cfg.filters;
    let k = cfg.kernel_size;
    let mut store = ParamStore::new();
    for (i, _) in cfg.dilations.iter().enumerate() {
        let cin = if i == 0 { 1 } else { f };
        push_wn_conv(&mut store, &format!("block{i}.conv1"), f, cin, k, rng)?;
        push_wn_conv(&mut store, &format!("block{i}.conv2"), f, f, k, rng)?;
        if cin != f {
            store.push(&format!("block{i}.proj.w"), he_uniform(&[f, cin, 1], rng), true)?;
            store.push(&format!("block{i}.proj.b"), Tensor::zeros(&[f]), false)?;
        }
        store.push(&format!("block{i}.ln.gamma"), Tensor::filled(&[f], T::one()), false)?;
        store.push(&format!("block{i}.ln.beta"), Tensor::zeros(&[f]), false)?;
    }
    store.push("head1.w", he_uniform(&[f, f, 1], rng), true)?;
    store.push("head1.b", Tensor::zeros(&[f]), false)?;
    store.push("head2.w", he_uniform(&[cfg.num_classes, f, 1], rng), true)?;
    store.push("head2.b", Tensor::zeros(&[cfg.num_classes]), false)?;
    Ok(store)
}

fn wn_conv<T: Scalar>(
    tape: &mut Tape<T>,
    ids: &ParamIds,
    prefix: &str,
    x: ValueId,
    spec: ConvSpec,
) -> Result<ValueId> {
    let w = tape.weight_norm(ids.get(&format!("{prefix}.v"))?, ids.get(&format!("{prefix}.g"))?)?;
    tape.conv1d(x, w, ids.get(&format!("{prefix}.b"))?, spec)
}

pub(super) fn forward<T: Scalar>(
    cfg: &TcnConfig,
    ids: &ParamIds,
    tape: &mut Tape<T>,
    x: ValueId,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(ValueId, ValueId)> {
    let f = cfg.filters;
    let k = cfg.kernel_size;
    let mut cur = x;
    for (i, &d) in cfg.dilations.iter().enumerate() {
        let cin = if i == 0 { 1 } else { f };
        let spec1 = ConvSpec::causal(cin, f, k, d).weight_normalized();
        let c1 = wn_conv(tape, ids, &format!("block{i}.conv1"), cur, spec1)?;
        let r1 = tape.relu(c1);
        let h1 = tape.dropout(r1, cfg.block_dropout, training, rng)?;

        let spec2 = ConvSpec::causal(f, f, k, d).weight_normalized();
        let c2 = wn_conv(tape, ids, &format!("block{i}.conv2"), h1, spec2)?;
        let r2 = tape.relu(c2);
        let h2 = tape.dropout(r2, cfg.block_dropout, training, rng)?;

        let residual = if cin != f {
            tape.conv1d(
                cur,
                ids.get(&format!("block{i}.proj.w"))?,
                ids.get(&format!("block{i}.proj.b"))?,
                ConvSpec::causal(cin, f, 1, 1),
            )?
        } else {
            cur
        };
        let summed = tape.add(h2, residual)?;
        cur = tape.layer_norm(
            summed,
            ids.get(&format!("block{i}.ln.gamma"))?,
            ids.get(&format!("block{i}.ln.beta"))?,
            LAYER_NORM_EPS,
        )?;
    }

    let h1 = tape.conv1d(
        cur,
        ids.get("head1.w")?,
        ids.get("head1.b")?,
        ConvSpec::causal(f, f, 1, 1),
    )?;
    let a1 = tape.relu(h1);
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
