//! Per-op gradient checks against the finite-difference oracle, plus the
//! hand-derived swish derivative reference point. The acceptance suite checks
//! full model compositions; these isolate single backward rules for faster
//! failure localization.

use rand::Rng;
use seqc_core::autodiff::Tape;
use seqc_core::gradcheck::{finite_difference_gradient, max_relative_error};
use seqc_core::loss::FocalLossConfig;
use seqc_core::nn::ConvSpec;
use seqc_core::rng;
use seqc_core::tensor::Tensor;

fn rand_tensor(shape: &[usize], seed: u64, span: f64) -> Tensor<f64> {
    let mut r = rng::stream(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-span..span))
}

#[test]
fn swish_gradient_at_zero_is_half() {
    let mut tape = Tape::<f64>::new();
    let w = tape.param(Tensor::scalar(0.0));
    let y = tape.swish(w);
    let mut grads = tape.backward(y).unwrap();
    assert!((grads.take_or_zeros(w).item().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let x0 = rand_tensor(&[2, 3, 5], 1, 1.5);
    let g0 = rand_tensor(&[5], 2, 0.8);
    let b0 = rand_tensor(&[5], 3, 0.5);
    let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
        let mut tape = Tape::new();
        let xi = tape.param(x.clone());
        let gi = tape.param(g.clone());
        let bi = tape.param(b.clone());
        let y = tape.layer_norm(xi, gi, bi, 1e-5).unwrap();
        let loss = tape.weighted_sum(y, 0.17, -1.0).unwrap();
        (tape, [xi, gi, bi], loss)
    };
    let (tape, ids, loss) = run(&x0, &g0, &b0);
    let mut grads = tape.backward(loss).unwrap();
    let inputs = [&x0, &g0, &b0];
    for (idx, &id) in ids.iter().enumerate() {
        let got = grads.take_or_zeros(id);
        let fd = finite_difference_gradient(
            &mut |probe: &Tensor<f64>| {
                let (x, g, b) = match idx {
                    0 => (probe.clone(), g0.clone(), b0.clone()),
                    1 => (x0.clone(), probe.clone(), b0.clone()),
                    _ => (x0.clone(), g0.clone(), probe.clone()),
                };
                let (t, _, l) = run(&x, &g, &b);
                t.value(l).item()
            },
            inputs[idx],
            1e-6,
        )
        .unwrap();
        let err = max_relative_error(&got, &fd);
        assert!(err < 1e-6, "layer_norm input {idx}: rel err {err:.3e}");
    }
}

#[test]
fn weight_norm_conv_gradients_match_finite_differences() {
    let v0 = rand_tensor(&[3, 2, 2], 4, 0.9);
    let g0 = rand_tensor(&[3], 5, 0.9).map(|x| x.abs() + 0.5);
    let x0 = rand_tensor(&[1, 10, 2], 6, 1.0);
    let spec = ConvSpec::causal(2, 3, 2, 2).weight_normalized();
    let run = |v: &Tensor<f64>, g: &Tensor<f64>| {
        let mut tape = Tape::new();
        let xi = tape.leaf(x0.clone());
        let vi = tape.param(v.clone());
        let gi = tape.param(g.clone());
        let b = tape.leaf(Tensor::zeros(&[3]));
        let w = tape.weight_norm(vi, gi).unwrap();
        let y = tape.conv1d(xi, w, b, spec).unwrap();
        let loss = tape.weighted_sum(y, 0.23, 0.4).unwrap();
        (tape, vi, gi, loss)
    };
    let (tape, vi, gi, loss) = run(&v0, &g0);
    let mut grads = tape.backward(loss).unwrap();
    let gv = grads.take_or_zeros(vi);
    let gg = grads.take_or_zeros(gi);
    let fd_v = finite_difference_gradient(
        &mut |p: &Tensor<f64>| {
            let (t, _, _, l) = run(p, &g0);
            t.value(l).item()
        },
        &v0,
        1e-6,
    )
    .unwrap();
    let fd_g = finite_difference_gradient(
        &mut |p: &Tensor<f64>| {
            let (t, _, _, l) = run(&v0, p);
            t.value(l).item()
        },
        &g0,
        1e-6,
    )
    .unwrap();
    assert!(max_relative_error(&gv, &fd_v) < 1e-6);
    assert!(max_relative_error(&gg, &fd_g) < 1e-6);
}

#[test]
fn softmax_focal_gradients_match_finite_differences() {
    let logits0 = rand_tensor(&[3, 4], 7, 2.0);
    let labels = [0usize, 2, 3];
    let cfg = FocalLossConfig::new(2.0, vec![1.1, 0.9, 1.3, 0.7]).unwrap();
    let run = |logits: &Tensor<f64>| {
        let mut tape = Tape::new();
        let li = tape.param(logits.clone());
        let p = tape.softmax(li).unwrap();
        let loss = tape.focal_loss(p, &labels, &cfg).unwrap();
        (tape, li, loss)
    };
    let (tape, li, loss) = run(&logits0);
    let mut grads = tape.backward(loss).unwrap();
    let got = grads.take_or_zeros(li);
    let fd = finite_difference_gradient(
        &mut |p: &Tensor<f64>| {
            let (t, _, l) = run(p);
            t.value(l).item()
        },
        &logits0,
        1e-6,
    )
    .unwrap();
    let err = max_relative_error(&got, &fd);
    assert!(err < 1e-6, "softmax+focal rel err {err:.3e}");
}
