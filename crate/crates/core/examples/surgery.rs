//! Cuts channels out of a residual network, checks the result against the
//! masked original, and round-trips it through a checkpoint file.
//!
//! `cargo run --example surgery`

use chanprune::data::normal_tensor;
use chanprune::network::{build, count_flops, LayerSpec, NetworkSpec};
use chanprune::surgeon::{equivalence_check, prune_structural, Provenance, PruneSpec};
use chanprune::checkpoint;

fn main() -> chanprune::Result<()> {
    let spec = NetworkSpec {
        input_shape: vec![10],
        layers: vec![
            LayerSpec::Dense { inputs: 10, outputs: 16 },
            LayerSpec::Relu,
            LayerSpec::ResidualMlpBlock { width: 16, hidden: 24 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 16, outputs: 5 },
        ],
        target_layer: 2,
    };
    let full = build(&spec, 1)?;
    let keep = vec![0, 3, 5, 7, 11, 19, 20, 23];
    let pruned = prune_structural(&full, &PruneSpec::new(2, keep.clone(), Provenance::default()))?;

    let probe = normal_tensor(&[32, 10], 1.0, 2);
    println!("max |pruned - masked| = {:.2e}", equivalence_check(&full, &pruned, &keep, &probe)?);
    println!("params {} -> {}", full.num_params(), pruned.num_params());
    println!("flops  {} -> {}", count_flops(&full)?.total, count_flops(&pruned)?.total);

    let path = std::env::temp_dir().join("chanprune_surgery_example.ckpt");
    checkpoint::save(&pruned, &path)?;
    let back = checkpoint::load(&path)?;
    println!("checkpoint round trip identical: {}", back == pruned);
    Ok(())
}
