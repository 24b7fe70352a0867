//! Pointwise and normalization layers: swish, relu, dropout, layer norm,
//! global average pooling, softmax.

use rand::Rng;

use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;
use crate::tensor::{dims2, dims3, Scalar, Tensor};

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// swish(x) = x * sigmoid(x), applied elementwise.
pub fn swish_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); at inference it is the
/// identity. Returns the output and, when masking happened, the multiplier
/// tensor reused by the backward pass.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    let mult: Vec<T> = (0..x.numel())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let out = Tensor::from_vec(
        x.shape(),
        x.data().iter().zip(&mult).map(|(&v, &m)| v * m).collect(),
    )?;
    Ok((out, Some(mult)))
}

/// Per-position layer normalization over the channel axis of `[B, T, C]`,
/// followed by the affine transform `gamma * xhat + beta`. `eps` sits inside
/// the square root. Returns (output, xhat, inv_std) with per-position stats.
pub fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (b, t, c) = dims3(x, "layer_norm input")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape(format!(
            "layer_norm affine shapes {:?}/{:?}, expected [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    let cn = T::from_f64(c as f64);
    let epsv = T::from_f64(eps);
    let mut out = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = Vec::with_capacity(b * t);
    for (pos, row) in x.data().chunks_exact(c).enumerate() {
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) / cn;
        let var = row
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            / cn;
        let istd = T::one() / (var + epsv).sqrt();
        inv_std.push(istd);
        let ob = &mut out.data_mut()[pos * c..(pos + 1) * c];
        let hb = &mut xhat.data_mut()[pos * c..(pos + 1) * c];
        for i in 0..c {
            let h = (row[i] - mean) * istd;
            hb[i] = h;
            ob[i] = gamma.data()[i] * h + beta.data()[i];
        }
    }
    Ok((out, xhat, inv_std))
}

/// Mean over the time axis: `[B, T, C] -> [B, C]`.
pub fn global_average_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, t, c) = dims3(x, "global_average_pool input")?;
    if t == 0 {
        return Err(Error::Shape("global_average_pool: empty time axis".into()));
    }
    let tn = T::from_f64(t as f64);
    let mut out = Tensor::zeros(&[b, c]);
    for bi in 0..b {
        let acc = &mut out.data_mut()[bi * c..(bi + 1) * c];
        for ti in 0..t {
            let row = &x.data()[(bi * t + ti) * c..(bi * t + ti + 1) * c];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a = *a + v;
            }
        }
        for a in acc.iter_mut() {
            *a = *a / tn;
        }
    }
    Ok(out)
}

/// Row-wise softmax of `[B, C]`, computed with max subtraction so large
/// logits cannot overflow.
pub fn softmax_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = dims2(x, "softmax input")?;
    let mut out = Tensor::zeros(x.shape());
    for (row, orow) in x
        .data()
        .chunks_exact(c)
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum = sum + e;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    Ok(out)
}

impl<T: Scalar> Tape<T> {
    pub fn swish(&mut self, x: ValueId) -> ValueId {
        let out = swish_forward(self.value(x));
        self.push_op(
            &[x],
            out,
            Box::new(move |vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let xv = &vals[x.0];
                let buf = sink.accum(x);
                for ((g, &d), &v) in buf.data_mut().iter_mut().zip(dy.data()).zip(xv.data()) {
                    let s = sigmoid(v);
                    // d/dx [x*s(x)] = s(x) * (1 + x * (1 - s(x)))
                    *g = *g + d * s * (T::one() + v * (T::one() - s));
                }
            }),
        )
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let out = relu_forward(self.value(x));
        self.push_op(
            &[x],
            out,
            Box::new(move |vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let xv = &vals[x.0];
                let buf = sink.accum(x);
                for ((g, &d), &v) in buf.data_mut().iter_mut().zip(dy.data()).zip(xv.data()) {
                    if v > T::zero() {
                        *g = *g + d;
                    }
                }
            }),
        )
    }

    pub fn dropout(
        &mut self,
        x: ValueId,
        rate: f64,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ValueId> {
        let (out, mult) = dropout_forward(self.value(x), rate, training, rng)?;
        Ok(self.push_op(
            &[x],
            out,
            Box::new(move |_vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let buf = sink.accum(x);
                match &mult {
                    None => buf.add_scaled(dy, T::one()).expect("dropout backward shape"),
                    Some(m) => {
                        for ((g, &d), &mv) in buf.data_mut().iter_mut().zip(dy.data()).zip(m) {
                            *g = *g + d * mv;
                        }
                    }
                }
            }),
        ))
    }

    pub fn layer_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<ValueId> {
        let (out, xhat, inv_std) =
            layer_norm_forward(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let c = *self.value(x).shape().last().unwrap();
        Ok(self.push_op(
            &[x, gamma, beta],
            out,
            Box::new(move |vals, dy, sink| {
                let cn = T::from_f64(c as f64);
                if sink.needs(beta) {
                    let db = sink.accum(beta);
                    for row in dy.data().chunks_exact(c) {
                        for (g, &d) in db.data_mut().iter_mut().zip(row) {
                            *g = *g + d;
                        }
                    }
                }
                if sink.needs(gamma) {
                    let dg = sink.accum(gamma);
                    for (row, hrow) in dy.data().chunks_exact(c).zip(xhat.data().chunks_exact(c)) {
                        for ((g, &d), &h) in dg.data_mut().iter_mut().zip(row).zip(hrow) {
                            *g = *g + d * h;
                        }
                    }
                }
                if sink.needs(x) {
                    let gamma_v = vals[gamma.0].clone();
                    let dx = sink.accum(x);
                    for (pos, (row, hrow)) in dy
                        .data()
                        .chunks_exact(c)
                        .zip(xhat.data().chunks_exact(c))
                        .enumerate()
                    {
                        // dxhat = dy * gamma; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                        let istd = inv_std[pos];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for i in 0..c {
                            let dh = row[i] * gamma_v.data()[i];
                            m1 = m1 + dh;
                            m2 = m2 + dh * hrow[i];
                        }
                        m1 = m1 / cn;
                        m2 = m2 / cn;
                        let buf = &mut dx.data_mut()[pos * c..(pos + 1) * c];
                        for i in 0..c {
                            let dh = row[i] * gamma_v.data()[i];
                            buf[i] = buf[i] + istd * (dh - m1 - hrow[i] * m2);
                        }
                    }
                }
            }),
        ))
    }

    pub fn global_average_pool(&mut self, x: ValueId) -> Result<ValueId> {
        let out = global_average_pool(self.value(x))?;
        let (b, t, c) = dims3(self.value(x), "global_average_pool input")?;
        Ok(self.push_op(
            &[x],
            out,
            Box::new(move |_vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let inv_t = T::from_f64(1.0 / t as f64);
                let dx = sink.accum(x);
                for bi in 0..b {
                    let grow = &dy.data()[bi * c..(bi + 1) * c];
                    for ti in 0..t {
                        let buf = &mut dx.data_mut()[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                        for (g, &d) in buf.iter_mut().zip(grow) {
                            *g = *g + d * inv_t;
                        }
                    }
                }
            }),
        ))
    }

    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId> {
        let out = softmax_forward(self.value(x))?;
        let probs = out.clone();
        let c = *self.value(x).shape().last().unwrap();
        Ok(self.push_op(
            &[x],
            out,
            Box::new(move |_vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let dx = sink.accum(x);
                for (pos, (prow, drow)) in probs
                    .data()
                    .chunks_exact(c)
                    .zip(dy.data().chunks_exact(c))
                    .enumerate()
                {
                    let dot = prow
                        .iter()
                        .zip(drow)
                        .fold(T::zero(), |a, (&p, &d)| a + p * d);
                    let buf = &mut dx.data_mut()[pos * c..(pos + 1) * c];
                    for i in 0..c {
                        buf[i] = buf[i] + prow[i] * (drow[i] - dot);
                    }
                }
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn swish_reference_points() {
        let x = Tensor::<f64>::from_vec(&[3], vec![0.0, 1.0, -20.0]).unwrap();
        let y = swish_forward(&x);
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 0.731059).abs() < 1e-6);
        // large negative inputs decay back toward zero
        assert!((y.data()[2] - (-4.122e-8)).abs() < 1e-9);
        assert!(y.data()[2] < 0.0);
    }

    #[test]
    fn softmax_rows_normalized_and_stable() {
        let x = Tensor::<f32>::from_vec(&[2, 4], vec![0.0, 0.0, 0.0, 0.0, 1000.0, 0.0, 0.0, 0.0])
            .unwrap();
        let p = softmax_forward(&x).unwrap();
        for &v in &p.data()[0..4] {
            assert!((v - 0.25).abs() < 1e-6);
        }
        assert!((p.data()[4] - 1.0).abs() < 1e-6);
        assert!(p.data()[5..8].iter().all(|&v| (0.0..1e-6).contains(&v)));
        for row in p.data().chunks_exact(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let base = vec![0.3f64, -1.2, 2.0, 0.7];
        let x = Tensor::from_vec(&[1, 4], base.clone()).unwrap();
        let shifted = Tensor::from_vec(&[1, 4], base.iter().map(|v| v + 5.0).collect()).unwrap();
        let a = softmax_forward(&x).unwrap();
        let b = softmax_forward(&shifted).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn layer_norm_reference_points() {
        let gamma = Tensor::<f64>::from_vec(&[3], vec![1.0; 3]).unwrap();
        let beta = Tensor::<f64>::zeros(&[3]);
        let x = Tensor::from_vec(&[1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let (y, _, _) = layer_norm_forward(&x, &gamma, &beta, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() < 1e-2));

        let g2 = Tensor::<f64>::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        let b2 = Tensor::<f64>::zeros(&[2]);
        let x2 = Tensor::from_vec(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        let (y2, _, _) = layer_norm_forward(&x2, &g2, &b2, 1e-12).unwrap();
        assert!((y2.data()[0] + 1.0).abs() < 1e-5 && (y2.data()[1] - 1.0).abs() < 1e-5);

        let g0 = Tensor::<f64>::zeros(&[2]);
        let b5 = Tensor::<f64>::from_vec(&[2], vec![5.0, 5.0]).unwrap();
        let (y3, _, _) = layer_norm_forward(&x2, &g0, &b5, 1e-5).unwrap();
        assert!(y3.data().iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn gap_is_time_mean() {
        let x = Tensor::<f64>::from_vec(&[1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(global_average_pool(&x).unwrap().data(), &[2.0]);
        let c = Tensor::<f64>::filled(&[2, 5, 3], 0.7);
        let p = global_average_pool(&c).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        let s = Tensor::<f64>::from_vec(&[1, 2, 1], vec![-1.0, 1.0]).unwrap();
        assert_eq!(global_average_pool(&s).unwrap().data(), &[0.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::<f32>::from_fn(&[100], |i| i as f32);
        let mut r = rng::stream(1);
        let (y0, m0) = dropout_forward(&x, 0.0, true, &mut r).unwrap();
        assert_eq!(y0, x);
        assert!(m0.is_none());
        let (y1, m1) = dropout_forward(&x, 0.7, false, &mut r).unwrap();
        assert_eq!(y1, x);
        assert!(m1.is_none());
        assert!(dropout_forward(&x, 1.0, true, &mut r).is_err());
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // Monte Carlo: mean of output within +-1% of mean of input at both
        // tested rates, over >= 1e5 elements.
        for rate in [0.5f64, 0.2] {
            let n = 200_000;
            let x = Tensor::<f64>::filled(&[n], 1.0);
            let mut r = rng::stream(99);
            let (y, _) = dropout_forward(&x, rate, true, &mut r).unwrap();
            let mean = y.data().iter().sum::<f64>() / n as f64;
            assert!(
                (mean - 1.0).abs() < 0.01,
                "rate {rate}: empirical mean {mean}"
            );
        }
    }
}
