//! Dilated causal 1-D convolution and weight normalization.
//!
//! Layouts: activations `[B, T, C]` (time-major per batch element, channels
//! fastest), kernels `[Cout, Cin, K]`. A causal conv left-pads implicitly with
//! `(K-1)*d` zeros so output length equals input length and `out[t]` sees only
//! `x[t], x[t-d], x[t-2d], ...`. Each kernel tap is one strided matrix product,
//! which is where nearly all of the training time goes.

use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::tensor::{dims3, Scalar, Tensor};

/// Static description of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub causal: bool,
    pub weight_normalized: bool,
}

impl ConvSpec {
    pub fn causal(in_channels: usize, out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            causal: true,
            weight_normalized: false,
        }
    }

    pub fn weight_normalized(mut self) -> Self {
        self.weight_normalized = true;
        self
    }

    /// Expected kernel tensor shape `[Cout, Cin, K]`.
    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel_size]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation < 1 {
            return Err(Error::Config(format!(
                "conv dilation must be >= 1, got {}",
                self.dilation
            )));
        }
        if self.kernel_size < 1 || self.in_channels < 1 || self.out_channels < 1 {
            return Err(Error::Config(format!("conv spec has zero-sized dimension: {self:?}")));
        }
        if !self.causal {
            return Err(Error::Config(
                "only causal convolutions are supported".into(),
            ));
        }
        Ok(())
    }

    fn check_tensors<T: Scalar>(&self, w: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
        self.validate()?;
        if w.shape() != self.weight_shape() {
            return Err(Error::Config(format!(
                "conv weights shape {:?} does not match spec {:?}",
                w.shape(),
                self.weight_shape()
            )));
        }
        if b.shape() != [self.out_channels] {
            return Err(Error::Config(format!(
                "conv bias shape {:?}, expected [{}]",
                b.shape(),
                self.out_channels
            )));
        }
        Ok(())
    }
}

/// Time shift of kernel tap `j`: the last tap (`j = K-1`) reads the current
/// sample, earlier taps reach back by multiples of the dilation.
#[inline]
fn tap_shift(spec: &ConvSpec, j: usize) -> usize {
    (spec.kernel_size - 1 - j) * spec.dilation
}

/// Causal dilated convolution forward pass. Activation is not applied here;
/// composition is explicit in the model builders.
pub fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check_tensors(w, b)?;
    let (batch, time, cin) = dims3(x, "conv input")?;
    if cin != spec.in_channels {
        return Err(Error::Shape(format!(
            "conv input has {cin} channels, spec wants {}",
            spec.in_channels
        )));
    }
    let (cout, k) = (spec.out_channels, spec.kernel_size);

    // Start from the broadcast bias, then accumulate one GEMM per tap.
    let mut out = Tensor::zeros(&[batch, time, cout]);
    {
        let od = out.data_mut();
        let bd = b.data();
        for row in od.chunks_exact_mut(cout) {
            row.copy_from_slice(bd);
        }
    }
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    for bi in 0..batch {
        for j in 0..k {
            let s = tap_shift(spec, j);
            if s >= time {
                continue; // tap reaches entirely into the zero padding
            }
            let m = time - s;
            unsafe {
                T::gemm(
                    m,
                    cin,
                    cout,
                    T::one(),
                    xd.as_ptr().add(bi * time * cin),
                    cin as isize,
                    1,
                    wd.as_ptr().add(j),
                    k as isize,
                    (cin * k) as isize,
                    T::one(),
                    od.as_mut_ptr().add((bi * time + s) * cout),
                    cout as isize,
                    1,
                );
            }
        }
    }
    Ok(out)
}

fn conv1d_backward_input<T: Scalar>(
    dy: &Tensor<T>,
    w: &Tensor<T>,
    spec: &ConvSpec,
    dx: &mut Tensor<T>,
) {
    let [batch, time, _]: [usize; 3] = dy.shape().try_into().expect("dy rank 3");
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
    let dyd = dy.data();
    let wd = w.data();
    let dxd = dx.data_mut();
    for bi in 0..batch {
        for j in 0..k {
            let s = tap_shift(spec, j);
            if s >= time {
                continue;
            }
            let m = time - s;
            unsafe {
                T::gemm(
                    m,
                    cout,
                    cin,
                    T::one(),
                    dyd.as_ptr().add((bi * time + s) * cout),
                    cout as isize,
                    1,
                    wd.as_ptr().add(j),
                    (cin * k) as isize,
                    k as isize,
                    T::one(),
                    dxd.as_mut_ptr().add(bi * time * cin),
                    cin as isize,
                    1,
                );
            }
        }
    }
}

fn conv1d_backward_weights<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    spec: &ConvSpec,
    dw: &mut Tensor<T>,
) {
    let [batch, time, _]: [usize; 3] = dy.shape().try_into().expect("dy rank 3");
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
    let dyd = dy.data();
    let xd = x.data();
    let dwd = dw.data_mut();
    for bi in 0..batch {
        for j in 0..k {
            let s = tap_shift(spec, j);
            if s >= time {
                continue;
            }
            let m = time - s;
            unsafe {
                T::gemm(
                    cin,
                    m,
                    cout,
                    T::one(),
                    xd.as_ptr().add(bi * time * cin),
                    1,
                    cin as isize,
                    dyd.as_ptr().add((bi * time + s) * cout),
                    cout as isize,
                    1,
                    T::one(),
                    dwd.as_mut_ptr().add(j),
                    k as isize,
                    (cin * k) as isize,
                );
            }
        }
    }
}

fn conv1d_backward_bias<T: Scalar>(dy: &Tensor<T>, db: &mut Tensor<T>) {
    let cout = *dy.shape().last().expect("dy has channels");
    let dbd = db.data_mut();
    for row in dy.data().chunks_exact(cout) {
        for (d, &g) in dbd.iter_mut().zip(row) {
            *d = *d + g;
        }
    }
}

/// Effective kernel from a weight-normalized parameterization:
/// per output filter, `W_f = gain_f * direction_f / ||direction_f||`.
/// Returns the kernel and the per-filter norms (needed by backward).
pub fn weight_normalized_weights<T: Scalar>(
    direction: &Tensor<T>,
    gain: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    if direction.rank() != 3 {
        return Err(Error::Shape(format!(
            "weight norm direction must be [Cout, Cin, K], got {:?}",
            direction.shape()
        )));
    }
    let cout = direction.shape()[0];
    if gain.shape() != [cout] {
        return Err(Error::Shape(format!(
            "weight norm gain shape {:?}, expected [{cout}]",
            gain.shape()
        )));
    }
    let slice = direction.numel() / cout;
    let mut out = Tensor::zeros(direction.shape());
    let mut norms = Vec::with_capacity(cout);
    for f in 0..cout {
        let v = &direction.data()[f * slice..(f + 1) * slice];
        let norm = v.iter().fold(T::zero(), |acc, &e| acc + e * e).sqrt();
        if norm == T::zero() {
            return Err(Error::DegenerateParameter(format!(
                "weight norm direction for filter {f} has zero norm"
            )));
        }
        let scale = gain.data()[f] / norm;
        for (o, &e) in out.data_mut()[f * slice..(f + 1) * slice].iter_mut().zip(v) {
            *o = e * scale;
        }
        norms.push(norm);
    }
    Ok((out, norms))
}

impl<T: Scalar> Tape<T> {
    /// Record a causal dilated convolution `y = conv(x; w, b)`.
    pub fn conv1d(&mut self, x: ValueId, w: ValueId, b: ValueId, spec: ConvSpec) -> Result<ValueId> {
        let out = conv1d_forward(self.value(x), self.value(w), self.value(b), &spec)?;
        Ok(self.push_op(
            &[x, w, b],
            out,
            Box::new(move |vals, dy, sink| {
                if sink.needs(x) {
                    conv1d_backward_input(dy, &vals[w.0], &spec, sink.accum(x));
                }
                if sink.needs(w) {
                    conv1d_backward_weights(dy, &vals[x.0], &spec, sink.accum(w));
                }
                if sink.needs(b) {
                    conv1d_backward_bias(dy, sink.accum(b));
                }
            }),
        ))
    }

    /// Record the weight-normalization reparameterization, producing the
    /// effective kernel consumed by a following `conv1d`.
    pub fn weight_norm(&mut self, direction: ValueId, gain: ValueId) -> Result<ValueId> {
        let (out, norms) = weight_normalized_weights(self.value(direction), self.value(gain))?;
        Ok(self.push_op(
            &[direction, gain],
            out,
            Box::new(move |vals, dw, sink| {
                let v = &vals[direction.0];
                let g = &vals[gain.0];
                let cout = v.shape()[0];
                let slice = v.numel() / cout;
                for (f, &norm) in norms.iter().enumerate() {
                    let vf = &v.data()[f * slice..(f + 1) * slice];
                    let dwf = &dw.data()[f * slice..(f + 1) * slice];
                    let dot = vf
                        .iter()
                        .zip(dwf)
                        .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                    if sink.needs(gain) {
                        let slot = &mut sink.accum(gain).data_mut()[f];
                        *slot = *slot + dot / norm;
                    }
                    if sink.needs(direction) {
                        let gf = g.data()[f];
                        let a = gf / norm;
                        let c = gf * dot / (norm * norm * norm);
                        let buf = &mut sink.accum(direction).data_mut()[f * slice..(f + 1) * slice];
                        for i in 0..slice {
                            buf[i] = buf[i] + a * dwf[i] - c * vf[i];
                        }
                    }
                }
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_1ch<Tv: Scalar>(input: &[f64], kernel: &[f64], dilation: usize, bias: f64) -> Vec<f64> {
        let t = input.len();
        let spec = ConvSpec::causal(1, 1, kernel.len(), dilation);
        let x = Tensor::<Tv>::from_vec(&[1, t, 1], input.iter().map(|&v| Tv::from_f64(v)).collect()).unwrap();
        let w = Tensor::<Tv>::from_vec(
            &[1, 1, kernel.len()],
            kernel.iter().map(|&v| Tv::from_f64(v)).collect(),
        )
        .unwrap();
        let b = Tensor::<Tv>::from_vec(&[1], vec![Tv::from_f64(bias)]).unwrap();
        conv1d_forward(&x, &w, &b, &spec)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.as_f64())
            .collect()
    }

    #[test]
    fn dilated_sum_with_zero_padding() {
        // out_t = x_t + x_{t-2} + x_{t-4}
        let out = conv_1ch::<f64>(&[1.0, 0.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 2, 0.0);
        assert_eq!(out, vec![1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn last_tap_is_identity() {
        let input = [0.3, -1.2, 2.5, 0.0, 4.0];
        for d in [1usize, 2, 5] {
            let out = conv_1ch::<f64>(&input, &[0.0, 0.0, 1.0], d, 0.0);
            assert_eq!(out, input.to_vec());
        }
    }

    #[test]
    fn bias_only_on_zero_input() {
        let out = conv_1ch::<f32>(&[0.0; 7], &[0.4, -0.3, 0.9], 3, 0.5);
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = ConvSpec {
            dilation: 0,
            ..ConvSpec::causal(1, 1, 3, 1)
        };
        assert!(spec.validate().is_err());
        let x = Tensor::<f32>::zeros(&[1, 4, 1]);
        let w = Tensor::<f32>::zeros(&[2, 1, 3]); // wrong Cout vs spec below
        let b = Tensor::<f32>::zeros(&[1]);
        let s2 = ConvSpec::causal(1, 1, 3, 1);
        assert!(matches!(
            conv1d_forward(&x, &w, &b, &s2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weight_norm_scales_to_gain() {
        let v = Tensor::<f64>::from_vec(&[1, 2, 1], vec![3.0, 4.0]).unwrap();
        let g1 = Tensor::<f64>::from_vec(&[1], vec![1.0]).unwrap();
        let (w, norms) = weight_normalized_weights(&v, &g1).unwrap();
        assert!((w.data()[0] - 0.6).abs() < 1e-12 && (w.data()[1] - 0.8).abs() < 1e-12);
        assert!((norms[0] - 5.0).abs() < 1e-12);

        let g10 = Tensor::<f64>::from_vec(&[1], vec![10.0]).unwrap();
        let (w10, _) = weight_normalized_weights(&v, &g10).unwrap();
        assert!((w10.data()[0] - 6.0).abs() < 1e-12 && (w10.data()[1] - 8.0).abs() < 1e-12);

        // already unit norm + unit gain => unchanged
        let u = Tensor::<f64>::from_vec(&[1, 2, 1], vec![0.6, 0.8]).unwrap();
        let (wu, _) = weight_normalized_weights(&u, &g1).unwrap();
        assert!(wu.max_abs_diff(&u) < 1e-12);
    }

    #[test]
    fn weight_norm_effective_norms_equal_gains() {
        let mut seed = 9u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let v = Tensor::<f64>::from_fn(&[5, 3, 2], |_| next());
        let g = Tensor::<f64>::from_vec(&[5], vec![0.3, 1.0, 2.5, 0.7, 4.0]).unwrap();
        let (w, _) = weight_normalized_weights(&v, &g).unwrap();
        for f in 0..5 {
            let slice = &w.data()[f * 6..(f + 1) * 6];
            let norm = slice.iter().map(|&e| e * e).sum::<f64>().sqrt();
            assert!(
                (norm - g.data()[f].abs()).abs() < 1e-6,
                "filter {f}: effective norm {norm} vs gain {}",
                g.data()[f]
            );
        }
    }

    #[test]
    fn weight_norm_rejects_zero_direction() {
        let v = Tensor::<f32>::zeros(&[1, 2, 1]);
        let g = Tensor::<f32>::from_vec(&[1], vec![1.0]).unwrap();
        assert!(matches!(
            weight_normalized_weights(&v, &g),
            Err(Error::DegenerateParameter(_))
        ));
    }

    #[test]
    fn multichannel_matches_naive() {
        // Compare the GEMM path against a direct triple loop.
        let (bsz, t, cin, cout, k, d) = (2usize, 9usize, 3usize, 4usize, 3usize, 2usize);
        let spec = ConvSpec::causal(cin, cout, k, d);
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let x = Tensor::<f64>::from_fn(&[bsz, t, cin], |_| next());
        let w = Tensor::<f64>::from_fn(&[cout, cin, k], |_| next());
        let b = Tensor::<f64>::from_fn(&[cout], |_| next());
        let got = conv1d_forward(&x, &w, &b, &spec).unwrap();
        for bi in 0..bsz {
            for ti in 0..t {
                for co in 0..cout {
                    let mut acc = b.data()[co];
                    for j in 0..k {
                        let shift = (k - 1 - j) * d;
                        if ti >= shift {
                            for ci in 0..cin {
                                acc += w.data()[(co * cin + ci) * k + j]
                                    * x.data()[(bi * t + (ti - shift)) * cin + ci];
                            }
                        }
                    }
                    let g = got.data()[(bi * t + ti) * cout + co];
                    assert!((g - acc).abs() < 1e-12, "mismatch at b={bi} t={ti} c={co}");
                }
            }
        }
    }
}
