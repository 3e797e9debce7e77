//! Forward contracts and gradient checks for every tape primitive.
//!
//! Gradients are verified against central finite differences computed by
//! rebuilding the forward graph from perturbed plain data, so the oracle
//! never touches the backward implementation it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_core::{
    additive_attention, bilstm, lstm_direction, Activation, Direction, GradTape, Mode,
    RunningStats, Tensor, TensorError, TensorRef,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xs[i];
            xs[i] = orig + h;
            let fp = f(&xs);
            xs[i] = orig - h;
            let fm = f(&xs);
            xs[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn assert_grads_close(analytic: &[f64], numeric: &[f64], tol: f64, what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: gradient length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let scale = a.abs().max(n.abs());
        if scale < 1e-6 {
            assert!((a - n).abs() < 1e-6, "{what}[{i}]: analytic {a} vs numeric {n}");
        } else {
            let rel = (a - n).abs() / scale;
            assert!(rel < tol, "{what}[{i}]: analytic {a} vs numeric {n}, rel err {rel}");
        }
    }
}

/// Builds the graph from plain data, returning gradient-target leaf refs and
/// a scalar loss ref; used for both the analytic pass and the FD rebuilds.
type Build = dyn Fn(&mut GradTape, &[Vec<f64>]) -> (Vec<TensorRef>, TensorRef);

fn check_gradients(inputs: &[Vec<f64>], build: &Build, tol: f64, what: &str) {
    let mut tape = GradTape::new();
    let (refs, loss) = build(&mut tape, inputs);
    tape.backward(loss).unwrap();
    for (j, &r) in refs.iter().enumerate() {
        let analytic = tape.grad(r).expect("gradient populated").to_vec();
        let numeric = numeric_grad(
            |xj: &[f64]| {
                let mut modified = inputs.to_vec();
                modified[j] = xj.to_vec();
                let mut t2 = GradTape::new();
                let (_, l) = build(&mut t2, &modified);
                t2.value(l).data()[0]
            },
            &inputs[j],
            1e-5,
        );
        assert_grads_close(&analytic, &numeric, tol, &format!("{what} input {j}"));
    }
}

/// Random projection of a non-scalar output into a scalar loss so every
/// output position contributes to the gradient.
fn project(tape: &mut GradTape, out: TensorRef, seed: u64) -> TensorRef {
    let n = tape.value(out).numel();
    let w = Tensor::new(tape.shape(out).to_vec(), rand_vec(n, &mut rng(seed))).unwrap();
    let wref = tape.leaf(w);
    let prod = tape.mul(out, wref).unwrap();
    tape.sum(prod)
}

// ── conv2d ──────────────────────────────────────────────────────────────

#[test]
fn conv2d_shape_law_matches_architecture_transitions() {
    let mut r = rng(1);
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::new(vec![32, 32, 3], rand_vec(32 * 32 * 3, &mut r)).unwrap());
    let w = tape.leaf(Tensor::new(vec![2, 2, 3, 6], rand_vec(2 * 2 * 3 * 6, &mut r)).unwrap());
    let y = tape.conv2d(x, w, None, 1).unwrap();
    assert_eq!(tape.shape(y), &[31, 31, 6]);

    let w2 = tape.leaf(Tensor::new(vec![4, 4, 6, 9], rand_vec(4 * 4 * 6 * 9, &mut r)).unwrap());
    let y2 = tape.conv2d(y, w2, None, 1).unwrap();
    assert_eq!(tape.shape(y2), &[28, 28, 9]);
}

#[test]
fn conv2d_identity_kernel_passes_input_through() {
    let mut r = rng(2);
    let mut tape = GradTape::new();
    let x_data = rand_vec(4 * 4 * 2, &mut r);
    let x = tape.leaf(Tensor::new(vec![4, 4, 2], x_data.clone()).unwrap());
    // 1x1 kernel mapping each channel to itself.
    let w = tape.leaf(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let b = tape.leaf(Tensor::zeros(&[2]));
    let y = tape.conv2d(x, w, Some(b), 1).unwrap();
    assert_eq!(tape.shape(y), &[4, 4, 2]);
    assert_eq!(tape.value(y).data(), &x_data[..]);
}

#[test]
fn conv2d_channel_mismatch_is_a_dimension_error() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::zeros(&[5, 5, 3]));
    let w = tape.leaf(Tensor::zeros(&[2, 2, 4, 6]));
    assert!(matches!(tape.conv2d(x, w, None, 1), Err(TensorError::Dimension(_))));
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut r = rng(3);
    let inputs = vec![
        rand_vec(5 * 5 * 2, &mut r),
        rand_vec(3 * 3 * 2 * 4, &mut r),
        rand_vec(4, &mut r),
    ];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::new(vec![5, 5, 2], data[0].clone()).unwrap().with_grad());
            let w = tape.leaf(Tensor::new(vec![3, 3, 2, 4], data[1].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::new(vec![4], data[2].clone()).unwrap().with_grad());
            let y = tape.conv2d(x, w, Some(b), 1).unwrap();
            let loss = project(tape, y, 99);
            (vec![x, w, b], loss)
        },
        1e-4,
        "conv2d",
    );
}

#[test]
fn conv2d_stride_two_shape() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::zeros(&[7, 7, 1]));
    let w = tape.leaf(Tensor::zeros(&[3, 3, 1, 2]));
    let y = tape.conv2d(x, w, None, 2).unwrap();
    assert_eq!(tape.shape(y), &[3, 3, 2]);
}

// ── batchnorm ───────────────────────────────────────────────────────────

#[test]
fn batchnorm_train_mode_normalizes_to_unit_statistics() {
    let mut r = rng(4);
    let mut tape = GradTape::new();
    let c = 3;
    let x = tape.leaf(Tensor::new(vec![8, 8, c], rand_vec(8 * 8 * c, &mut r)).unwrap());
    let gamma = tape.leaf(Tensor::ones(&[c]));
    let beta = tape.leaf(Tensor::zeros(&[c]));
    let mut running = RunningStats::new(c);
    let y = tape
        .batchnorm(x, gamma, beta, &mut running, Mode::Train, 0.99, 1e-9)
        .unwrap();
    let yd = tape.value(y).data();
    let positions = 64.0;
    for ch in 0..c {
        let mean: f64 = yd.iter().skip(ch).step_by(c).sum::<f64>() / positions;
        let var: f64 = yd.iter().skip(ch).step_by(c).map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / positions;
        assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "channel {ch} var {var}");
    }
}

#[test]
fn batchnorm_rejects_nonpositive_epsilon() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::zeros(&[4, 4, 2]));
    let gamma = tape.leaf(Tensor::ones(&[2]));
    let beta = tape.leaf(Tensor::zeros(&[2]));
    let mut running = RunningStats::new(2);
    let got = tape.batchnorm(x, gamma, beta, &mut running, Mode::Train, 0.99, 0.0);
    assert!(matches!(got, Err(TensorError::Config(_))));
}

#[test]
fn batchnorm_updates_running_stats_by_ema() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::filled(&[2, 2, 1], 3.0));
    let gamma = tape.leaf(Tensor::ones(&[1]));
    let beta = tape.leaf(Tensor::zeros(&[1]));
    let mut running = RunningStats::new(1);
    tape.batchnorm(x, gamma, beta, &mut running, Mode::Train, 0.9, 1e-3).unwrap();
    // Batch mean 3, variance 0: running = 0.9*old + 0.1*batch.
    assert!((running.mean[0] - 0.3).abs() < 1e-12);
    assert!((running.var[0] - 0.9).abs() < 1e-12);
}

#[test]
fn batchnorm_gradients_match_finite_differences_in_both_modes() {
    let mut r = rng(5);
    let inputs =
        vec![rand_vec(4 * 3 * 2, &mut r), rand_vec(2, &mut r), rand_vec(2, &mut r)];
    for mode in [Mode::Train, Mode::Infer] {
        check_gradients(
            &inputs,
            &move |tape, data| {
                let x = tape.leaf(Tensor::new(vec![4, 3, 2], data[0].clone()).unwrap().with_grad());
                let gamma = tape.leaf(Tensor::new(vec![2], data[1].clone()).unwrap().with_grad());
                let beta = tape.leaf(Tensor::new(vec![2], data[2].clone()).unwrap().with_grad());
                let mut running = RunningStats::new(2);
                running.mean = vec![0.2, -0.1];
                running.var = vec![1.5, 0.7];
                let y = tape
                    .batchnorm(x, gamma, beta, &mut running, mode, 0.99, 1e-3)
                    .unwrap();
                let loss = project(tape, y, 17);
                (vec![x, gamma, beta], loss)
            },
            1e-4,
            "batchnorm",
        );
    }
}

// ── activations and softmax ─────────────────────────────────────────────

#[test]
fn activation_fixed_points() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.0]));
    for (kind, expected) in [
        (Activation::Swish, 0.0),
        (Activation::Tanh, 0.0),
        (Activation::Sigmoid, 0.5),
    ] {
        let y = tape.activation(x, kind);
        assert_eq!(tape.value(y).data()[0], expected);
    }
}

#[test]
fn swish_gradient_matches_finite_differences_tightly() {
    let mut r = rng(6);
    let inputs = vec![rand_vec(40, &mut r).iter().map(|v| v * 3.0).collect()];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::from_vec(data[0].clone()).with_grad());
            let y = tape.activation(x, Activation::Swish);
            let loss = project(tape, y, 23);
            (vec![x], loss)
        },
        1e-6,
        "swish",
    );
}

#[test]
fn tanh_and_sigmoid_gradients_match_finite_differences() {
    let mut r = rng(7);
    for kind in [Activation::Tanh, Activation::Sigmoid] {
        let inputs = vec![rand_vec(30, &mut r)];
        check_gradients(
            &inputs,
            &move |tape, data| {
                let x = tape.leaf(Tensor::from_vec(data[0].clone()).with_grad());
                let y = tape.activation(x, kind);
                let loss = project(tape, y, 29);
                (vec![x], loss)
            },
            1e-4,
            "activation",
        );
    }
}

#[test]
fn softmax_uniform_logits_give_equal_probabilities() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.7; 5]));
    let y = tape.softmax(x).unwrap();
    for &p in tape.value(y).data() {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn softmax_is_stable_for_extreme_logits() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1000.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    let p = tape.value(y).data();
    assert!(p.iter().all(|v| v.is_finite()));
    assert!((p[0] - 1.0).abs() < 1e-12);
    assert!(p[1].abs() < 1e-12);
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut r = rng(8);
    let inputs = vec![rand_vec(12, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::new(vec![3, 4], data[0].clone()).unwrap().with_grad());
            let y = tape.softmax(x).unwrap();
            let loss = project(tape, y, 31);
            (vec![x], loss)
        },
        1e-4,
        "softmax",
    );
}

// ── maxpool ─────────────────────────────────────────────────────────────

#[test]
fn maxpool_shapes_drop_odd_tails() {
    let mut tape = GradTape::new();
    let a = tape.leaf(Tensor::zeros(&[31, 31, 5]));
    let pa = tape.maxpool2d(a).unwrap();
    assert_eq!(tape.shape(pa), &[15, 15, 5]);
    let b = tape.leaf(Tensor::zeros(&[13, 13, 5]));
    let pb = tape.maxpool2d(b).unwrap();
    assert_eq!(tape.shape(pb), &[6, 6, 5]);
}

#[test]
fn maxpool_of_constant_input_is_constant() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::filled(&[4, 4, 2], 2.5));
    let y = tape.maxpool2d(x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 2.5));
}

#[test]
fn maxpool_ties_send_gradient_to_first_row_major_element() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::filled(&[2, 2, 1], 1.0).with_grad());
    let y = tape.maxpool2d(x).unwrap();
    let loss = tape.sum(y);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    let mut r = rng(9);
    let inputs = vec![rand_vec(6 * 6 * 2, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::new(vec![6, 6, 2], data[0].clone()).unwrap().with_grad());
            let y = tape.maxpool2d(x).unwrap();
            let loss = project(tape, y, 37);
            (vec![x], loss)
        },
        1e-4,
        "maxpool",
    );
}

// ── concat / pad / reshape ──────────────────────────────────────────────

#[test]
fn concat_matches_architecture_channel_merges() {
    let mut tape = GradTape::new();
    let a = tape.leaf(Tensor::zeros(&[15, 15, 5]));
    let b = tape.leaf(Tensor::zeros(&[15, 15, 9]));
    let ab = tape.concat(&[a, b], 2).unwrap();
    assert_eq!(tape.shape(ab), &[15, 15, 14]);

    let c = tape.leaf(Tensor::zeros(&[128]));
    let d = tape.leaf(Tensor::zeros(&[128]));
    let cd = tape.concat(&[c, d], 0).unwrap();
    assert_eq!(tape.shape(cd), &[256]);
}

#[test]
fn concat_of_single_tensor_is_identity() {
    let mut r = rng(10);
    let mut tape = GradTape::new();
    let data = rand_vec(12, &mut r);
    let a = tape.leaf(Tensor::new(vec![3, 4], data.clone()).unwrap());
    let y = tape.concat(&[a], 1).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
    assert_eq!(tape.shape(y), &[3, 4]);
}

#[test]
fn concat_rejects_mismatched_non_axis_dims() {
    let mut tape = GradTape::new();
    let a = tape.leaf(Tensor::zeros(&[15, 15, 5]));
    let b = tape.leaf(Tensor::zeros(&[14, 14, 9]));
    assert!(matches!(tape.concat(&[a, b], 2), Err(TensorError::Dimension(_))));
}

#[test]
fn concat_and_pad_gradients_match_finite_differences() {
    let mut r = rng(11);
    let inputs = vec![rand_vec(2 * 2 * 2, &mut r), rand_vec(2 * 2 * 3, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let a = tape.leaf(Tensor::new(vec![2, 2, 2], data[0].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::new(vec![2, 2, 3], data[1].clone()).unwrap().with_grad());
            let cat = tape.concat(&[a, b], 2).unwrap();
            let padded = tape.pad_spatial(cat, 3, 3).unwrap();
            let loss = project(tape, padded, 41);
            (vec![a, b], loss)
        },
        1e-4,
        "concat+pad",
    );
}

#[test]
fn pad_spatial_zero_fills_bottom_right() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::new(vec![1, 1, 2], vec![5.0, 6.0]).unwrap());
    let y = tape.pad_spatial(x, 2, 2).unwrap();
    assert_eq!(tape.shape(y), &[2, 2, 2]);
    assert_eq!(tape.value(y).data(), &[5.0, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn reshape_is_row_major_and_checked() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap());
    let y = tape.reshape(x, &[6]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(tape.reshape(x, &[4]).is_err());
}

// ── dropout ─────────────────────────────────────────────────────────────

#[test]
fn dropout_inference_is_exact_identity() {
    let mut r = rng(12);
    let data = rand_vec(100, &mut r);
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(data.clone()));
    let y = tape.dropout(x, 0.5, Mode::Infer, &mut r).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
}

#[test]
fn dropout_rate_zero_is_identity_in_train_mode() {
    let mut r = rng(13);
    let data = rand_vec(64, &mut r);
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(data.clone()));
    let y = tape.dropout(x, 0.0, Mode::Train, &mut r).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
}

#[test]
fn dropout_preserves_expectation() {
    let n = 100_000;
    let mut r = rng(14);
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0; n]));
    let y = tape.dropout(x, 0.5, Mode::Train, &mut r).unwrap();
    let mean: f64 = tape.value(y).data().iter().sum::<f64>() / n as f64;
    assert!((0.98..=1.02).contains(&mean), "mean {mean}");
}

#[test]
fn dropout_gradient_matches_finite_differences_for_fixed_mask() {
    let mut r = rng(15);
    let inputs = vec![rand_vec(50, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::from_vec(data[0].clone()).with_grad());
            let mut mask_rng = rng(77);
            let y = tape.dropout(x, 0.5, Mode::Train, &mut mask_rng).unwrap();
            let loss = project(tape, y, 43);
            (vec![x], loss)
        },
        1e-4,
        "dropout",
    );
}

// ── LSTM / BiLSTM / attention / pooling ─────────────────────────────────

fn lstm_params(d: usize, u: usize, r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (rand_vec(d * 4 * u, r), rand_vec(u * 4 * u, r), rand_vec(4 * u, r))
}

#[test]
fn lstm_zero_parameters_give_zero_hidden_states() {
    let mut r = rng(16);
    let mut tape = GradTape::new();
    let seq = tape.leaf(Tensor::new(vec![5, 3], rand_vec(15, &mut r)).unwrap());
    let w = tape.leaf(Tensor::zeros(&[3, 8]));
    let rw = tape.leaf(Tensor::zeros(&[2, 8]));
    let b = tape.leaf(Tensor::zeros(&[8]));
    let y = tape.lstm(seq, w, rw, b).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_parameter_count_formula() {
    // 4*U*(D+U+1) per direction for D=6, U=64.
    let (d, u) = (6, 64);
    let w = Tensor::zeros(&[d, 4 * u]);
    let r = Tensor::zeros(&[u, 4 * u]);
    let b = Tensor::zeros(&[4 * u]);
    let per_direction = w.numel() + r.numel() + b.numel();
    assert_eq!(per_direction, 18_176);
    assert_eq!(2 * per_direction, 36_352);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let (t, d, u) = (3, 2, 2);
    let mut r = rng(17);
    let (w, rw, b) = lstm_params(d, u, &mut r);
    let inputs = vec![rand_vec(t * d, &mut r), w, rw, b];
    check_gradients(
        &inputs,
        &move |tape, data| {
            let seq = tape.leaf(Tensor::new(vec![t, d], data[0].clone()).unwrap().with_grad());
            let w = tape.leaf(Tensor::new(vec![d, 4 * u], data[1].clone()).unwrap().with_grad());
            let rw = tape.leaf(Tensor::new(vec![u, 4 * u], data[2].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::new(vec![4 * u], data[3].clone()).unwrap().with_grad());
            let y = tape.lstm(seq, w, rw, b).unwrap();
            let loss = tape.sum(y);
            (vec![seq, w, rw, b], loss)
        },
        1e-4,
        "lstm",
    );
}

#[test]
fn lstm_backward_direction_aligns_time_indices() {
    let (t, d, u) = (4, 2, 3);
    let mut r = rng(18);
    let (w, rw, b) = lstm_params(d, u, &mut r);
    let seq_data = rand_vec(t * d, &mut r);

    let mut tape = GradTape::new();
    let seq = tape.leaf(Tensor::new(vec![t, d], seq_data.clone()).unwrap());
    let wref = tape.leaf(Tensor::new(vec![d, 4 * u], w.clone()).unwrap());
    let rref = tape.leaf(Tensor::new(vec![u, 4 * u], rw.clone()).unwrap());
    let bref = tape.leaf(Tensor::new(vec![4 * u], b.clone()).unwrap());
    let back = lstm_direction(&mut tape, seq, wref, rref, bref, Direction::Backward).unwrap();

    // Running forward over the manually reversed sequence must equal the
    // backward pass re-reversed.
    let mut reversed = vec![0.0; t * d];
    for step in 0..t {
        reversed[step * d..(step + 1) * d]
            .copy_from_slice(&seq_data[(t - 1 - step) * d..(t - step) * d]);
    }
    let rev_seq = tape.leaf(Tensor::new(vec![t, d], reversed).unwrap());
    let fwd = lstm_direction(&mut tape, rev_seq, wref, rref, bref, Direction::Forward).unwrap();
    let back_data = tape.value(back).data();
    let fwd_data = tape.value(fwd).data();
    for step in 0..t {
        assert_eq!(
            &back_data[step * u..(step + 1) * u],
            &fwd_data[(t - 1 - step) * u..(t - step) * u]
        );
    }
}

#[test]
fn bilstm_output_shape_and_zero_case() {
    let mut r = rng(19);
    let (t, d, u) = (36, 6, 64);
    let mut tape = GradTape::new();
    let seq = tape.leaf(Tensor::new(vec![t, d], rand_vec(t * d, &mut r)).unwrap());
    let mk = |tape: &mut GradTape, zero: bool, r: &mut ChaCha8Rng| {
        let (w, rw, b) = if zero {
            (vec![0.0; d * 4 * u], vec![0.0; u * 4 * u], vec![0.0; 4 * u])
        } else {
            lstm_params(d, u, r)
        };
        (
            tape.leaf(Tensor::new(vec![d, 4 * u], w).unwrap()),
            tape.leaf(Tensor::new(vec![u, 4 * u], rw).unwrap()),
            tape.leaf(Tensor::new(vec![4 * u], b).unwrap()),
        )
    };
    let fwd = mk(&mut tape, false, &mut r);
    let bwd = mk(&mut tape, false, &mut r);
    let y = bilstm(&mut tape, seq, fwd, bwd).unwrap();
    assert_eq!(tape.shape(y), &[36, 128]);

    let fwd0 = mk(&mut tape, true, &mut r);
    let bwd0 = mk(&mut tape, true, &mut r);
    let y0 = bilstm(&mut tape, seq, fwd0, bwd0).unwrap();
    assert!(tape.value(y0).data().iter().all(|&v| v == 0.0));
}

#[test]
fn bilstm_reversing_input_swaps_directional_halves() {
    // With shared parameters for both directions, the forward half on the
    // reversed input equals the time-reversed backward half on the original.
    let (t, d, u) = (4, 3, 2);
    let mut r = rng(20);
    let (w, rw, b) = lstm_params(d, u, &mut r);
    let seq_data = rand_vec(t * d, &mut r);

    let mut tape = GradTape::new();
    let params = (
        tape.leaf(Tensor::new(vec![d, 4 * u], w).unwrap()),
        tape.leaf(Tensor::new(vec![u, 4 * u], rw).unwrap()),
        tape.leaf(Tensor::new(vec![4 * u], b).unwrap()),
    );
    let seq = tape.leaf(Tensor::new(vec![t, d], seq_data).unwrap());
    let out1 = bilstm(&mut tape, seq, params, params).unwrap();
    let rev = tape.reverse_rows(seq).unwrap();
    let out2 = bilstm(&mut tape, rev, params, params).unwrap();
    let o1 = tape.value(out1).data();
    let o2 = tape.value(out2).data();
    let width = 2 * u;
    for step in 0..t {
        let fwd_of_rev = &o2[step * width..step * width + u];
        let bwd_of_orig = &o1[(t - 1 - step) * width + u..(t - step) * width];
        for (a, b) in fwd_of_rev.iter().zip(bwd_of_orig) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn attention_uniform_weights_for_identical_rows() {
    let (t, f) = (6, 4);
    let mut r = rng(21);
    let row = rand_vec(f, &mut r);
    let mut seq_data = Vec::new();
    for _ in 0..t {
        seq_data.extend_from_slice(&row);
    }
    let mut tape = GradTape::new();
    let seq = tape.leaf(Tensor::new(vec![t, f], seq_data).unwrap());
    let w = tape.leaf(Tensor::new(vec![f, f], rand_vec(f * f, &mut r)).unwrap());
    let b = tape.leaf(Tensor::new(vec![f], rand_vec(f, &mut r)).unwrap());
    let u = tape.leaf(Tensor::new(vec![f], rand_vec(f, &mut r)).unwrap());
    let (out, alpha) = additive_attention(&mut tape, seq, w, b, u).unwrap();
    let a = tape.value(alpha).data();
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for &av in a {
        assert!((av - 1.0 / t as f64).abs() < 1e-12);
    }
    let od = tape.value(out).data();
    for step in 0..t {
        for c in 0..f {
            assert!((od[step * f + c] - row[c] / t as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_weights_sum_to_one_and_gradients_check() {
    let (t, f) = (5, 3);
    let mut r = rng(22);
    let inputs = vec![
        rand_vec(t * f, &mut r),
        rand_vec(f * f, &mut r),
        rand_vec(f, &mut r),
        rand_vec(f, &mut r),
    ];
    // Weight-sum invariant on the analytic pass.
    {
        let mut tape = GradTape::new();
        let seq = tape.leaf(Tensor::new(vec![t, f], inputs[0].clone()).unwrap());
        let w = tape.leaf(Tensor::new(vec![f, f], inputs[1].clone()).unwrap());
        let b = tape.leaf(Tensor::new(vec![f], inputs[2].clone()).unwrap());
        let u = tape.leaf(Tensor::new(vec![f], inputs[3].clone()).unwrap());
        let (_, alpha) = additive_attention(&mut tape, seq, w, b, u).unwrap();
        let s: f64 = tape.value(alpha).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    check_gradients(
        &inputs,
        &move |tape, data| {
            let seq = tape.leaf(Tensor::new(vec![t, f], data[0].clone()).unwrap().with_grad());
            let w = tape.leaf(Tensor::new(vec![f, f], data[1].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::new(vec![f], data[2].clone()).unwrap().with_grad());
            let u = tape.leaf(Tensor::new(vec![f], data[3].clone()).unwrap().with_grad());
            let (out, _) = additive_attention(tape, seq, w, b, u).unwrap();
            let loss = project(tape, out, 47);
            (vec![seq, w, b, u], loss)
        },
        1e-4,
        "attention",
    );
}

#[test]
fn attention_parameter_count_for_feature_width_128() {
    let f = 128;
    let total = Tensor::zeros(&[f, f]).numel() + Tensor::zeros(&[f]).numel() * 2;
    assert_eq!(total, 16_640);
}

#[test]
fn mean_rows_contracts() {
    let mut tape = GradTape::new();
    let big = tape.leaf(Tensor::zeros(&[36, 128]));
    let pooled = tape.mean_rows(big).unwrap();
    assert_eq!(tape.shape(pooled), &[128]);

    let c = tape.leaf(Tensor::filled(&[7, 3], 4.0));
    let y = tape.mean_rows(c).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| (v - 4.0).abs() < 1e-15));

    let v = tape.leaf(Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap());
    let half = tape.mean_rows(v).unwrap();
    assert_eq!(tape.value(half).data(), &[0.5, 1.0, 1.5]);
}

#[test]
fn dense_layer_contracts_and_gradients() {
    // Parameter counts via stored array sizes.
    assert_eq!(Tensor::zeros(&[256, 5]).numel() + Tensor::zeros(&[5]).numel(), 1285);
    assert_eq!(Tensor::zeros(&[256, 8]).numel() + Tensor::zeros(&[8]).numel(), 2056);

    // Zero weights: output equals bias.
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![3.0, -1.0, 2.0]));
    let w = tape.leaf(Tensor::zeros(&[3, 2]));
    let b = tape.leaf(Tensor::from_vec(vec![0.5, -0.5]));
    let wx = tape.matmul(x, w).unwrap();
    let y = tape.add(wx, b).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, -0.5]);

    let mut r = rng(24);
    let inputs = vec![rand_vec(4, &mut r), rand_vec(4 * 3, &mut r), rand_vec(3, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let x = tape.leaf(Tensor::from_vec(data[0].clone()).with_grad());
            let w = tape.leaf(Tensor::new(vec![4, 3], data[1].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::from_vec(data[2].clone()).with_grad());
            let wx = tape.matmul(x, w).unwrap();
            let y = tape.add(wx, b).unwrap();
            let loss = project(tape, y, 53);
            (vec![x, w, b], loss)
        },
        1e-4,
        "dense",
    );
}

#[test]
fn matmul_matvec_scale_rows_gradients() {
    let mut r = rng(25);
    let inputs = vec![rand_vec(6 * 4, &mut r), rand_vec(4 * 3, &mut r), rand_vec(3, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let a = tape.leaf(Tensor::new(vec![6, 4], data[0].clone()).unwrap().with_grad());
            let b = tape.leaf(Tensor::new(vec![4, 3], data[1].clone()).unwrap().with_grad());
            let v = tape.leaf(Tensor::from_vec(data[2].clone()).with_grad());
            let prod = tape.matmul(a, b).unwrap(); // [6,3]
            let scores = tape.matvec(prod, v).unwrap(); // [6]
            let weighted = tape.scale_rows(prod, scores).unwrap(); // [6,3]
            let loss = project(tape, weighted, 59);
            (vec![a, b, v], loss)
        },
        1e-4,
        "matmul/matvec/scale_rows",
    );
}

// ── cross entropy ───────────────────────────────────────────────────────

#[test]
fn cross_entropy_uniform_logits_equal_log_k() {
    let mut tape = GradTape::new();
    let logits = tape.leaf(Tensor::from_vec(vec![0.3; 5]));
    let loss = tape.cross_entropy(logits, &[2]).unwrap();
    assert!((tape.value(loss).data()[0] - 5.0_f64.ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_confident_correct_logits_approach_zero() {
    let mut tape = GradTape::new();
    let logits = tape.leaf(Tensor::from_vec(vec![50.0, 0.0, 0.0]));
    let loss = tape.cross_entropy(logits, &[0]).unwrap();
    assert!(tape.value(loss).data()[0] < 1e-12);
}

#[test]
fn cross_entropy_rejects_out_of_range_labels() {
    let mut tape = GradTape::new();
    let logits = tape.leaf(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
    assert!(matches!(tape.cross_entropy(logits, &[3]), Err(TensorError::Input(_))));
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng(26);
    let inputs = vec![rand_vec(4 * 3, &mut r)];
    check_gradients(
        &inputs,
        &|tape, data| {
            let logits = tape.leaf(Tensor::new(vec![4, 3], data[0].clone()).unwrap().with_grad());
            let loss = tape.cross_entropy(logits, &[0, 2, 1, 2]).unwrap();
            (vec![logits], loss)
        },
        1e-5,
        "cross_entropy",
    );
}

// ── backward semantics ──────────────────────────────────────────────────

#[test]
fn backward_of_sum_is_all_ones() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]).with_grad());
    let loss = tape.sum(x);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn fanout_gradients_accumulate_additively() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.5]).with_grad());
    let s1 = tape.sum(x);
    let s2 = tape.sum(x);
    let total = tape.add(s1, s2).unwrap();
    tape.backward(total).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0]);
}

#[test]
fn backward_on_non_scalar_is_a_usage_error() {
    let mut tape = GradTape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]).with_grad());
    let y = tape.scale(x, 2.0);
    assert!(matches!(tape.backward(y), Err(TensorError::Usage(_))));
}

#[test]
fn empty_sequence_tensors_are_rejected_at_construction() {
    assert!(matches!(Tensor::new(vec![0, 2], vec![]), Err(TensorError::Dimension(_))));
}

#[test]
fn replay_determinism_is_bitwise() {
    let run = || {
        let mut r = rng(27);
        let mut tape = GradTape::new();
        let x = tape.leaf(Tensor::new(vec![6, 6, 2], rand_vec(72, &mut r)).unwrap().with_grad());
        let w = tape.leaf(Tensor::new(vec![2, 2, 2, 3], rand_vec(24, &mut r)).unwrap().with_grad());
        let b = tape.leaf(Tensor::new(vec![3], rand_vec(3, &mut r)).unwrap().with_grad());
        let conv = tape.conv2d(x, w, Some(b), 1).unwrap();
        let act = tape.activation(conv, Activation::Swish);
        let pooled = tape.maxpool2d(act).unwrap();
        let flat = tape.reshape(pooled, &[4, 3]).unwrap();
        let sm = tape.softmax(flat).unwrap();
        let loss = tape.cross_entropy(sm, &[0, 1, 2, 0]).unwrap();
        tape.backward(loss).unwrap();
        (
            tape.value(loss).data().to_vec(),
            tape.grad(x).unwrap().to_vec(),
            tape.grad(w).unwrap().to_vec(),
        )
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}
