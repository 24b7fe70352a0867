//! Focal loss with per-class alpha weights derived from class frequencies.
//!
//! Per sample with true class y: `-alpha_y * (1 - p_y)^gamma * log(max(p_y, eps))`,
//! reduced by the mean over the batch. With gamma = 0 and uniform alpha this
//! is exactly mean cross-entropy.

use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::tensor::{dims2, Scalar, Tensor};

/// Inverse-frequency class weights: `w_c = N_total / (C * N_c)`.
/// Balanced counts give all ones.
pub fn class_weights_inverse_frequency(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::Config("class weights need at least one class".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {c} has zero samples; merge or drop it before weighting"
        )));
    }
    let total: usize = counts.iter().sum();
    let c = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (c * n as f64))
        .collect())
}

#[derive(Debug, Clone)]
pub struct FocalLossConfig {
    /// Focusing exponent; 0 reduces to cross-entropy.
    pub gamma: f64,
    /// Per-class weight, length = number of classes.
    pub alpha: Vec<f64>,
    /// Log clamp guarding against -inf on zero probabilities.
    pub epsilon: f64,
}

impl FocalLossConfig {
    pub fn new(gamma: f64, alpha: Vec<f64>) -> Result<Self> {
        let cfg = FocalLossConfig {
            gamma,
            alpha,
            epsilon: 1e-12,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uniform weights for `num_classes` classes.
    pub fn uniform(gamma: f64, num_classes: usize) -> Result<Self> {
        Self::new(gamma, vec![1.0; num_classes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("focal gamma {} must be >= 0", self.gamma)));
        }
        if self.alpha.iter().any(|&a| a.is_nan() || a <= 0.0) {
            return Err(Error::Config("focal alpha entries must be > 0".into()));
        }
        Ok(())
    }
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Input(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean focal loss of probability rows `[B, C]` against integer labels.
pub fn focal_loss<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    cfg: &FocalLossConfig,
) -> Result<T> {
    let (b, c) = dims2(probs, "focal loss probs")?;
    check_labels(labels, b, c)?;
    if cfg.alpha.len() != c {
        return Err(Error::Config(format!(
            "{} alpha weights for {c} classes",
            cfg.alpha.len()
        )));
    }
    cfg.validate()?;
    let mut total = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.data()[i * c + y].as_f64();
        let p_safe = p.max(cfg.epsilon);
        total += -cfg.alpha[y] * (1.0 - p).powf(cfg.gamma) * p_safe.ln();
    }
    Ok(T::from_f64(total / b as f64))
}

impl<T: Scalar> Tape<T> {
    /// Record the focal loss of a probability tensor against fixed labels,
    /// producing the scalar training objective.
    pub fn focal_loss(
        &mut self,
        probs: ValueId,
        labels: &[usize],
        cfg: &FocalLossConfig,
    ) -> Result<ValueId> {
        let value = focal_loss(self.value(probs), labels, cfg)?;
        let (b, c) = dims2(self.value(probs), "focal loss probs")?;
        let labels = labels.to_vec();
        let cfg = cfg.clone();
        Ok(self.push_op(
            &[probs],
            Tensor::scalar(value),
            Box::new(move |vals, dy, sink| {
                if !sink.needs(probs) {
                    return;
                }
                let upstream = dy.data()[0].as_f64();
                let pv = &vals[probs.0];
                let dx = sink.accum(probs);
                for (i, &y) in labels.iter().enumerate() {
                    let p = pv.data()[i * c + y].as_f64();
                    let p_safe = p.max(cfg.epsilon);
                    let one_m = 1.0 - p;
                    // dL/dp_y; the log term only varies while p is above the clamp
                    let mut d = cfg.alpha[y] * cfg.gamma * one_m.powf(cfg.gamma - 1.0) * p_safe.ln();
                    if p > cfg.epsilon {
                        d -= cfg.alpha[y] * one_m.powf(cfg.gamma) / p_safe;
                    }
                    d = d / b as f64 * upstream;
                    let slot = &mut dx.data_mut()[i * c + y];
                    *slot = *slot + T::from_f64(d);
                }
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_frequency_weights() {
        let w = class_weights_inverse_frequency(&[3563, 3800, 11086, 2447]).unwrap();
        let expect = [1.4662, 1.3747, 0.4712, 2.1349];
        for (got, want) in w.iter().zip(expect) {
            assert!((got - want).abs() < 1e-3, "got {got}, want {want}");
        }

        let eq = class_weights_inverse_frequency(&[50, 50, 50]).unwrap();
        assert!(eq.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let w2 = class_weights_inverse_frequency(&[1, 1, 1, 3]).unwrap();
        assert_eq!(w2, vec![1.5, 1.5, 1.5, 0.5]);

        assert!(class_weights_inverse_frequency(&[4, 0, 1]).is_err());
    }

    #[test]
    fn focal_reference_points() {
        let cfg = FocalLossConfig::uniform(2.0, 2).unwrap();
        // perfectly classified sample contributes zero
        let perfect = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(focal_loss(&perfect, &[0], &cfg).unwrap(), 0.0);

        // p_y = 0.9, gamma = 2, alpha = 1 => (0.1)^2 * (-ln 0.9)
        let p = Tensor::<f64>::from_vec(&[1, 2], vec![0.9, 0.1]).unwrap();
        let l = focal_loss(&p, &[0], &cfg).unwrap();
        assert!((l - 0.0010536).abs() < 1e-7, "got {l}");
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let cfg = FocalLossConfig::uniform(0.0, 3).unwrap();
        let probs = Tensor::<f64>::from_vec(
            &[2, 3],
            vec![0.2, 0.5, 0.3, 0.7, 0.1, 0.2],
        )
        .unwrap();
        let labels = [1usize, 0];
        let fl = focal_loss(&probs, &labels, &cfg).unwrap();
        let ce = -(0.5f64.ln() + 0.7f64.ln()) / 2.0;
        assert!((fl - ce).abs() < 1e-9);
    }

    #[test]
    fn monotone_decreasing_in_confidence() {
        let cfg = FocalLossConfig::uniform(2.0, 2).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let t = Tensor::<f64>::from_vec(&[1, 2], vec![p, 1.0 - p]).unwrap();
            let l = focal_loss(&t, &[0], &cfg).unwrap();
            assert!(l >= 0.0);
            assert!(l < prev, "loss must strictly decrease as p_y grows");
            prev = l;
        }
    }

    #[test]
    fn larger_gamma_downweights_easy_samples() {
        for k in 0..40 {
            let p = 0.6 + 0.01 * k as f64; // grid 0.60 ..= 0.99
            let t = Tensor::<f64>::from_vec(&[1, 2], vec![p, 1.0 - p]).unwrap();
            let mut prev = f64::INFINITY;
            for gamma in [0.0, 0.5, 1.0, 2.0, 4.0] {
                let cfg = FocalLossConfig::uniform(gamma, 2).unwrap();
                let l = focal_loss(&t, &[0], &cfg).unwrap();
                assert!(l <= prev + 1e-15, "gamma ordering broke at p={p}");
                prev = l;
            }
        }
    }

    #[test]
    fn invalid_labels_rejected() {
        let cfg = FocalLossConfig::uniform(2.0, 2).unwrap();
        let p = Tensor::<f64>::from_vec(&[1, 2], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            focal_loss(&p, &[2], &cfg),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            focal_loss(&p, &[0, 1], &cfg),
            Err(Error::Input(_))
        ));
    }
}
