//! Adam with coupled L2 regularization, plus micro-batch gradient
//! accumulation.
//!
//! L2 is applied by adding `lambda * w` to the gradient of decay-eligible
//! parameters before the moment updates (classic L2, not decoupled decay).
//! Biases, weight-norm gains and norm affines are excluded via the parameter
//! store's decay flags.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// Named gradient map, one entry per trainable parameter.
pub type GradMap<T> = BTreeMap<String, Tensor<T>>;

/// Elementwise mean across micro-batch gradient maps, so the accumulated
/// group behaves like one batch of the combined size (losses here reduce by
/// batch mean). Key sets and shapes must agree.
pub fn accumulate_gradients<T: Scalar>(micro_grads: &[GradMap<T>]) -> Result<GradMap<T>> {
    let first = micro_grads
        .first()
        .ok_or_else(|| Error::Contract("accumulate_gradients: empty input".into()))?;
    let scale = T::from_f64(1.0 / micro_grads.len() as f64);
    let mut out: GradMap<T> = GradMap::new();
    for (name, g) in first {
        out.insert(name.clone(), g.clone());
    }
    for map in &micro_grads[1..] {
        if map.len() != first.len() {
            return Err(Error::Contract(
                "accumulate_gradients: key sets differ across micro-batches".into(),
            ));
        }
        for (name, g) in map {
            let acc = out.get_mut(name).ok_or_else(|| {
                Error::Contract(format!("accumulate_gradients: key {name} missing"))
            })?;
            acc.add_scaled(g, T::one()).map_err(|_| {
                Error::Contract(format!("accumulate_gradients: shape mismatch for {name}"))
            })?;
        }
    }
    for g in out.values_mut() {
        g.scale(scale);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2_lambda: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2_lambda: 1e-4,
        }
    }
}

/// First/second moment estimates per parameter plus the shared step counter.
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every parameter in the store.
    /// Gradients must cover all parameters; any NaN aborts before any
    /// parameter is touched so the caller can stop the run cleanly.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradMap<T>) -> Result<()> {
        for p in params.iter() {
            let g = grads.get(&p.name).ok_or_else(|| {
                Error::Contract(format!("gradient missing for parameter {}", p.name))
            })?;
            if g.shape() != p.value.shape() {
                return Err(Error::Contract(format!(
                    "gradient shape {:?} != parameter shape {:?} for {}",
                    g.shape(),
                    p.value.shape(),
                    p.name
                )));
            }
            if !g.is_all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter {}",
                    p.name
                )));
            }
        }

        self.step += 1;
        let c = &self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one_m_b1 = T::from_f64(1.0 - c.beta1);
        let one_m_b2 = T::from_f64(1.0 - c.beta2);
        let corr1 = T::from_f64(1.0 - c.beta1.powi(self.step as i32));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64(c.learning_rate);
        let eps = T::from_f64(c.eps);
        let lambda = T::from_f64(c.l2_lambda);

        let names: Vec<(String, bool)> = params
            .iter()
            .map(|p| (p.name.clone(), p.decay))
            .collect();
        for (name, decay) in names {
            let w = params.tensor_mut(&name)?;
            let g = &grads[&name];
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(w.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(w.shape()));
            for i in 0..w.numel() {
                let wi = w.data()[i];
                let mut gi = g.data()[i];
                if decay {
                    gi = gi + lambda * wi;
                }
                let mi = b1 * m.data()[i] + one_m_b1 * gi;
                let vi = b2 * v.data()[i] + one_m_b2 * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / corr1;
                let v_hat = vi / corr2;
                w.data_mut()[i] = wi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("w", Tensor::scalar(w), true).unwrap();
        s
    }

    fn gmap(g: f64) -> GradMap<f64> {
        let mut m = GradMap::new();
        m.insert("w".into(), Tensor::scalar(g));
        m
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // unit gradient, no decay: bias-corrected m_hat/sqrt(v_hat) = 1
        let mut adam = AdamState::new(AdamConfig {
            l2_lambda: 0.0,
            ..AdamConfig::default()
        });
        let mut params = scalar_store(1.0);
        adam.step(&mut params, &gmap(1.0)).unwrap();
        let w = params.get("w").unwrap().value.item().unwrap();
        let delta = 1.0 - w;
        assert!((delta - 1e-3).abs() < 1e-9, "step magnitude {delta}");
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut adam = AdamState::new(AdamConfig {
            l2_lambda: 0.0,
            ..AdamConfig::default()
        });
        let mut params = scalar_store(0.7);
        for _ in 0..25 {
            adam.step(&mut params, &gmap(0.0)).unwrap();
        }
        assert_eq!(params.get("w").unwrap().value.item().unwrap(), 0.7);
    }

    #[test]
    fn l2_pulls_weights_toward_zero() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut params = scalar_store(0.5);
        adam.step(&mut params, &gmap(0.0)).unwrap();
        assert!(params.get("w").unwrap().value.item().unwrap() < 0.5);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut params = scalar_store(0.5);
        assert!(matches!(
            adam.step(&mut params, &gmap(f64::NAN)),
            Err(Error::Numeric(_))
        ));
        // parameter untouched
        assert_eq!(params.get("w").unwrap().value.item().unwrap(), 0.5);
    }

    #[test]
    fn accumulation_mean_and_contracts() {
        let g = gmap(2.0);
        let mean = accumulate_gradients(&[g.clone(), g.clone()]).unwrap();
        assert_eq!(mean["w"].item().unwrap(), 2.0);

        let opposite = accumulate_gradients(&[gmap(1.5), gmap(-1.5)]).unwrap();
        assert_eq!(opposite["w"].item().unwrap(), 0.0);

        let mut other = GradMap::new();
        other.insert("different".into(), Tensor::scalar(1.0));
        assert!(matches!(
            accumulate_gradients(&[gmap(1.0), other]),
            Err(Error::Contract(_))
        ));
        assert!(accumulate_gradients::<f64>(&[]).is_err());
    }
}
