mod common;

use chanprune::autodiff::{check_gradients, Tape};
use chanprune::data::normal_tensor;
use chanprune::network::{build, grad_check, LayerSpec, NetworkSpec};
use chanprune::Tensor;

const STEP: f64 = 1e-5;

fn labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + 3) % classes).collect()
}

fn check_model(spec: NetworkSpec, seed: u64) -> f64 {
    let model = build(&spec, seed).unwrap();
    let x = common::probe(&spec, 5, seed + 1);
    grad_check(&model, &x, &labels(5, spec.num_classes().unwrap()), STEP).unwrap()
}

#[test]
fn linear_quadratic_closed_form() {
    // loss = sum((x w^T)^2); dL/dw = 2 (x w^T)^T x
    let w = normal_tensor(&[1, 4], 1.0, 1);
    let x = normal_tensor(&[6, 4], 1.0, 2);
    let err = check_gradients(&[w], STEP, |tape, p| {
        let xs = tape.constant(x.clone());
        let wt = tape.transpose(p[0])?;
        let y = tape.matmul(xs, wt)?;
        let sq = tape.mul(y, y)?;
        tape.sum(sq)
    })
    .unwrap();
    assert!(err <= 1e-7, "relative error {err}");
}

#[test]
fn no_parameters_means_zero_error() {
    let err = check_gradients(&[], STEP, |tape, _| {
        let c = tape.constant(Tensor::scalar(3.0));
        tape.sum(c)
    })
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn dense_relu_dense() {
    assert!(check_model(NetworkSpec::mlp(4, 6, 3), 3) <= 1e-4);
}

#[test]
fn conv_relu_dense() {
    let spec = NetworkSpec {
        input_shape: vec![2, 5, 5],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: [3, 3], stride: 2, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 27, outputs: 4 },
        ],
        target_layer: 0,
    };
    let err = check_model(spec, 4);
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn residual_block() {
    let spec = NetworkSpec {
        input_shape: vec![4],
        layers: vec![
            LayerSpec::ResidualMlpBlock { width: 4, hidden: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 4, outputs: 3 },
        ],
        target_layer: 0,
    };
    assert!(check_model(spec, 5) <= 1e-4);
}

#[test]
fn three_layer_composite() {
    let spec = NetworkSpec {
        input_shape: vec![1, 6, 6],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 3, kernel: [3, 3], stride: 1, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: [2, 2], stride: 2, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 8, outputs: 3 },
        ],
        target_layer: 0,
    };
    assert!(check_model(spec, 6) <= 1e-4);
}

#[test]
fn every_architecture_family() {
    for family in 0..common::FAMILIES {
        for seed in 0..3 {
            let m = common::model(family, 100 * family as u64 + seed);
            let x = common::probe(&m.spec, 4, seed);
            let err = grad_check(&m, &x, &labels(4, m.spec.num_classes().unwrap()), STEP).unwrap();
            assert!(err <= 1e-4, "family {family} seed {seed}: {err}");
        }
    }
}

#[test]
fn tape_ops_match_finite_differences() {
    let a = normal_tensor(&[3, 4], 1.0, 10);
    let b = normal_tensor(&[3, 4], 1.0, 11);
    // softmax, mul, add, scale, reshape, mask
    let err = check_gradients(&[a.clone(), b.clone()], STEP, |tape, p| {
        let s = tape.softmax(p[0])?;
        let m = tape.mul(s, p[1])?;
        let m = tape.add(m, p[0])?;
        let m = tape.scale(m, -1.7)?;
        let m = tape.mask_channels(m, &[true, false, true, true])?;
        let r = tape.reshape(m, &[4, 3])?;
        let r = tape.mul(r, r)?;
        tape.sum(r)
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");
    // cross-entropy over a bias-shifted product
    let err = check_gradients(&[a, normal_tensor(&[4], 1.0, 12)], STEP, |tape, p| {
        let z = tape.add_bias(p[0], p[1])?;
        tape.cross_entropy(z, &[0, 3, 1])
    })
    .unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn scaling_the_loss_scales_gradients_exactly() {
    let w = normal_tensor(&[3, 2], 1.0, 20);
    let x = normal_tensor(&[5, 2], 1.0, 21);
    let run = |alpha: Option<f64>| {
        let mut tape = Tape::new();
        let wv = tape.leaf(w.clone(), true);
        let xs = tape.constant(x.clone());
        let wt = tape.transpose(wv).unwrap();
        let z = tape.matmul(xs, wt).unwrap();
        let mut loss = tape.cross_entropy(z, &[0, 1, 2, 0, 1]).unwrap();
        if let Some(a) = alpha {
            loss = tape.scale(loss, a).unwrap();
        }
        tape.backward(loss).unwrap().get(wv).unwrap().clone()
    };
    let base = run(None);
    // powers of two scale without rounding, so agreement is bitwise
    for alpha in [2.0, 0.25, -8.0] {
        let scaled = run(Some(alpha));
        for (g, s) in base.data().iter().zip(scaled.data()) {
            assert_eq!((g * alpha).to_bits(), s.to_bits());
        }
    }
    let scaled = run(Some(2.5));
    for (g, s) in base.data().iter().zip(scaled.data()) {
        assert!((g * 2.5 - s).abs() <= 4.0 * f64::EPSILON * s.abs());
    }
    assert_eq!(run(None), base);
}
