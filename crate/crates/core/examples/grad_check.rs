//! Central-difference check of the tape's gradients on a small conv net and
//! an MLP.
//!
//! `cargo run --example grad_check`

use chanprune::data::normal_tensor;
use chanprune::network::{build, grad_check, LayerSpec, NetworkSpec};

fn main() -> chanprune::Result<()> {
    let conv = NetworkSpec {
        input_shape: vec![1, 6, 6],
        layers: vec![
            LayerSpec::Conv2d { in_channels: 1, out_channels: 3, kernel: [3, 3], stride: 1, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 48, outputs: 4 },
        ],
        target_layer: 0,
    };
    for (name, spec) in [("mlp", NetworkSpec::mlp(8, 12, 4)), ("conv", conv)] {
        let model = build(&spec, 3)?;
        let mut shape = vec![5];
        shape.extend_from_slice(&spec.input_shape);
        let x = normal_tensor(&shape, 1.0, 9);
        let err = grad_check(&model, &x, &[0, 1, 2, 3, 0], 1e-5)?;
        println!("{name:>4}: {} params, max relative error {err:.2e}", model.num_params());
    }
    Ok(())
}
