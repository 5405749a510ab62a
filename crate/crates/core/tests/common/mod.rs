#![allow(dead_code)]

use chanprune::data::{normal_tensor, Dataset};
use chanprune::network::{build, Checkpoint, LayerSpec, NetworkSpec};
use chanprune::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: usize = 5;

/// One of several small architectures, sized from `rng`:
/// 0 dense target in a one-hidden-layer MLP, 1 dense target in a deeper
/// stack, 2 conv target feeding a conv, 3 conv target feeding flatten+dense,
/// 4 residual block inner layer.
pub fn arch(family: usize, rng: &mut ChaCha8Rng) -> NetworkSpec {
    let classes = rng.gen_range(2..5);
    match family {
        0 => NetworkSpec::mlp(rng.gen_range(2..7), rng.gen_range(2..9), classes),
        1 => {
            let hidden: Vec<usize> = (0..3).map(|_| rng.gen_range(2..8)).collect();
            NetworkSpec::deep_mlp(rng.gen_range(2..6), &hidden, classes, 1)
        }
        2 => {
            let c = rng.gen_range(2..5);
            let h = rng.gen_range(4..7);
            NetworkSpec {
                input_shape: vec![1, h, h],
                layers: vec![
                    LayerSpec::Conv2d { in_channels: 1, out_channels: c, kernel: [3, 3], stride: 1, padding: 1 },
                    LayerSpec::Relu,
                    LayerSpec::Conv2d { in_channels: c, out_channels: 2, kernel: [2, 2], stride: 2, padding: 0 },
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { inputs: 2 * (h / 2) * (h / 2), outputs: classes },
                ],
                target_layer: 0,
            }
        }
        3 => {
            let c = rng.gen_range(2..5);
            let h = rng.gen_range(3..6);
            NetworkSpec {
                input_shape: vec![2, h, h],
                layers: vec![
                    LayerSpec::Conv2d { in_channels: 2, out_channels: c, kernel: [2, 2], stride: 1, padding: 0 },
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { inputs: c * (h - 1) * (h - 1), outputs: classes },
                ],
                target_layer: 0,
            }
        }
        _ => {
            let d = rng.gen_range(2..6);
            NetworkSpec {
                input_shape: vec![d],
                layers: vec![
                    LayerSpec::ResidualMlpBlock { width: d, hidden: rng.gen_range(2..7) },
                    LayerSpec::Relu,
                    LayerSpec::Dense { inputs: d, outputs: classes },
                ],
                target_layer: 0,
            }
        }
    }
}

/// Random model of `family` with biases drawn away from zero, so no ReLU
/// sits exactly on its kink.
pub fn model(family: usize, seed: u64) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = arch(family, &mut rng);
    let mut m = build(&spec, seed).unwrap();
    for p in m.params.iter_mut().filter(|p| p.shape().len() == 1) {
        for v in p.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    m
}

/// Normal inputs with uniform labels for `spec`.
pub fn data(spec: &NetworkSpec, n: usize, seed: u64) -> Dataset {
    let mut shape = vec![n];
    shape.extend(&spec.input_shape);
    let classes = spec.num_classes().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    Dataset::new(normal_tensor(&shape, 1.0, seed), labels, classes).unwrap()
}

pub fn probe(spec: &NetworkSpec, n: usize, seed: u64) -> Tensor {
    let mut shape = vec![n];
    shape.extend(&spec.input_shape);
    normal_tensor(&shape, 1.0, seed)
}

/// Random non-empty keep set, ascending.
pub fn keep_set(width: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let keep: Vec<usize> = (0..width).filter(|_| rng.gen_bool(0.5)).collect();
        if !keep.is_empty() {
            return keep;
        }
    }
}
