//! Model state and the two classifier architectures.
//!
//! A model is a named parameter store plus the architecture config that
//! instantiated it. Forward passes run over an autodiff tape; inference uses
//! a throwaway tape with non-trainable leaves.

mod tcn;
mod wavenet;

pub use tcn::TcnConfig;
pub use wavenet::WaveNetConfig;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, ValueId};
use crate::data::zscore_normalize;
use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;
use crate::tensor::{dims3, Scalar, Tensor};

pub const ZSCORE_EPS: f64 = 1e-8;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// One trainable tensor. `decay` marks participation in L2 regularization;
/// biases, gains and norm affines are excluded.
#[derive(Debug, Clone)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    pub decay: bool,
}

/// Ordered, uniquely-named parameter collection. Order is the build order and
/// fixes the checkpoint layout.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn push(&mut self, name: &str, value: Tensor<T>, decay: bool) -> Result<()> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        self.params.push(Param {
            name: name.to_string(),
            value,
            decay,
        });
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    /// Register every parameter on a tape. `trainable` decides whether
    /// backward will produce gradients for them.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> ParamIds {
        let mut ids = BTreeMap::new();
        for p in &self.params {
            let id = if trainable {
                tape.param(p.value.clone())
            } else {
                tape.leaf(p.value.clone())
            };
            ids.insert(p.name.clone(), id);
        }
        ParamIds { ids }
    }
}

/// Name -> tape value mapping produced by [`ParamStore::register`].
pub struct ParamIds {
    ids: BTreeMap<String, ValueId>,
}

impl ParamIds {
    pub fn get(&self, name: &str) -> Result<ValueId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter {name} not registered")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ValueId)> {
        self.ids.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Wavenet,
    Tcn,
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchKind::Wavenet => write!(f, "wavenet"),
            ArchKind::Tcn => write!(f, "tcn"),
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wavenet" => Ok(ArchKind::Wavenet),
            "tcn" => Ok(ArchKind::Tcn),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Architecture config snapshot stored with models and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum ArchConfig {
    Wavenet(WaveNetConfig),
    Tcn(TcnConfig),
}

impl ArchConfig {
    pub fn kind(&self) -> ArchKind {
        match self {
            ArchConfig::Wavenet(_) => ArchKind::Wavenet,
            ArchConfig::Tcn(_) => ArchKind::Tcn,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ArchConfig::Wavenet(c) => c.num_classes,
            ArchConfig::Tcn(c) => c.num_classes,
        }
    }

    pub fn l2_lambda(&self) -> f64 {
        match self {
            ArchConfig::Wavenet(c) => c.l2_lambda,
            ArchConfig::Tcn(c) => c.l2_lambda,
        }
    }

    /// Dropout rate the trainer starts from. The TCN rate is fixed by its
    /// blocks; the WaveNet rate is the adaptive controller's initial value.
    pub fn initial_dropout(&self) -> f64 {
        match self {
            ArchConfig::Wavenet(c) => c.dropout_rate,
            ArchConfig::Tcn(c) => c.block_dropout,
        }
    }

    pub fn receptive_field(&self) -> usize {
        match self {
            ArchConfig::Wavenet(c) => compute_receptive_field(c.kernel_size, &c.dilations, 1),
            ArchConfig::Tcn(c) => {
                compute_receptive_field(c.kernel_size, &c.dilations, c.convs_per_block)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArchConfig::Wavenet(c) => c.validate(),
            ArchConfig::Tcn(c) => c.validate(),
        }
    }
}

/// Trailing input samples that can influence one output position:
/// `1 + convs_per_level * (kernel_size - 1) * sum(dilations)`.
pub fn compute_receptive_field(
    kernel_size: usize,
    dilations: &[usize],
    convs_per_level: usize,
) -> usize {
    1 + convs_per_level * (kernel_size - 1) * dilations.iter().sum::<usize>()
}

/// Architecture config plus its instantiated parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ArchConfig,
    pub params: ParamStore<T>,
}

/// Handles into a recorded forward pass.
pub struct Recorded {
    pub params: ParamIds,
    /// Pre-pool feature map `[B, T, num_classes]`.
    pub prepool: ValueId,
    /// Class probabilities `[B, num_classes]`.
    pub probs: ValueId,
}

impl<T: Scalar> Model<T> {
    pub fn build(config: ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let params = match &config {
            ArchConfig::Wavenet(c) => wavenet::build_params(c, rng)?,
            ArchConfig::Tcn(c) => tcn::build_params(c, rng)?,
        };
        Ok(Model { config, params })
    }

    /// Inference: z-score each sample, run the net, return probability rows.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let mut rng = crate::rng::stream(0); // no draws happen at inference
        let rec = self.forward_on(&mut tape, batch, false, 0.0, &mut rng, false)?;
        Ok(tape.value(rec.probs).clone())
    }

    /// Training-mode forward recorded on a caller-owned tape, with all
    /// parameters registered as trainable. The dropout rate applies to the
    /// WaveNet blocks; TCN blocks always use their fixed rate.
    pub fn forward_recorded(
        &self,
        tape: &mut Tape<T>,
        batch: &Tensor<T>,
        training: bool,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Recorded> {
        self.forward_on(tape, batch, training, dropout_rate, rng, true)
    }

    /// Probe entry point: runs the causal stack on an already-normalized
    /// input (z-score skipped) and returns the pre-pool feature map. Used by
    /// causality and receptive-field checks, which need the strictly causal
    /// part of the network in isolation.
    pub fn prepool_features(&self, normalized: &Tensor<T>) -> Result<Tensor<T>> {
        validate_input_shape(normalized)?;
        let mut tape = Tape::new();
        let mut rng = crate::rng::stream(0);
        let ids = self.params.register(&mut tape, false);
        let x = tape.leaf(normalized.clone());
        let rec = self.run_stack(&mut tape, ids, x, false, 0.0, &mut rng)?;
        Ok(tape.value(rec.prepool).clone())
    }

    fn forward_on(
        &self,
        tape: &mut Tape<T>,
        batch: &Tensor<T>,
        training: bool,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
        trainable: bool,
    ) -> Result<Recorded> {
        validate_input_shape(batch)?;
        let ids = self.params.register(tape, trainable);
        let x = tape.leaf(normalize_batch(batch));
        self.run_stack(tape, ids, x, training, dropout_rate, rng)
    }

    fn run_stack(
        &self,
        tape: &mut Tape<T>,
        ids: ParamIds,
        x: ValueId,
        training: bool,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Recorded> {
        let (prepool, probs) = match &self.config {
            ArchConfig::Wavenet(c) => {
                wavenet::forward(c, &ids, tape, x, training, dropout_rate, rng)?
            }
            ArchConfig::Tcn(c) => tcn::forward(c, &ids, tape, x, training, rng)?,
        };
        Ok(Recorded {
            params: ids,
            prepool,
            probs,
        })
    }
}

fn validate_input_shape<T: Scalar>(batch: &Tensor<T>) -> Result<()> {
    let (b, t, c) = dims3(batch, "model input")?;
    if c != 1 {
        return Err(Error::Shape(format!(
            "model input must have 1 channel, got {c}"
        )));
    }
    if b == 0 || t == 0 {
        return Err(Error::Shape("model input has an empty axis".into()));
    }
    Ok(())
}

/// Per-sample z-score over the full window; the parameterless input layer.
fn normalize_batch<T: Scalar>(batch: &Tensor<T>) -> Tensor<T> {
    let t = batch.shape()[1];
    let mut out = Tensor::zeros(batch.shape());
    for (src, dst) in batch
        .data()
        .chunks_exact(t)
        .zip(out.data_mut().chunks_exact_mut(t))
    {
        dst.copy_from_slice(&zscore_normalize(src, ZSCORE_EPS));
    }
    out
}

/// He-uniform fan-in initialization for a conv kernel `[Cout, Cin, K]`.
pub(crate) fn he_uniform<T: Scalar>(shape: &[usize; 3], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let fan_in = (shape[1] * shape[2]) as f64;
    let bound = (6.0 / fan_in).sqrt();
    Tensor::from_fn(&shape[..], |_| T::from_f64(rng.gen_range(-bound..bound)))
}
