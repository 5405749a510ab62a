//! Extreme-sparsity comparison: a 64-unit teacher pruned to 4 channels by
//! random, ℓ1 and AGF selection, each fine-tuned, against a narrow network
//! trained from scratch. Five seeds.
//!
//! `cargo run --release --example phase_transition -- [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use chanprune::demos::{demo_phase_transition, PhaseTransitionConfig, PHASE_VARIANTS};

fn main() -> chanprune::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let start = Instant::now();
    let r = demo_phase_transition(&PhaseTransitionConfig::default(), out.as_deref())?;
    println!("teacher eval accuracy {:.4}", r.teacher_accuracy);
    for v in PHASE_VARIANTS {
        let (m, sd) = r.stats(v);
        println!("{v:>8}: mean {m:.4}  sd {sd:.4}  runs {:?}", r.accuracies(v));
    }
    println!("{}", r.summary());
    println!("took {:.1?}", start.elapsed());
    Ok(())
}
