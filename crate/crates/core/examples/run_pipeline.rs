//! Runs every stage of the bundled demo config into a directory.
//!
//! `cargo run --example run_pipeline -- [out_dir]`

use std::path::PathBuf;

use chanprune::config::{Overrides, RunConfig};
use chanprune::pipeline;

fn main() -> chanprune::Result<()> {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml");
    let out_dir = std::env::args().nth(1).map(PathBuf::from);
    let cfg = RunConfig::load(&config, &Overrides { out_dir, ..Default::default() })?;

    let teacher = pipeline::train_teacher(&cfg)?;
    let last = teacher.epochs.last().unwrap();
    println!("teacher: train acc {:.3}, eval acc {:.3}", last.train_acc, last.eval_acc.unwrap_or(f64::NAN));
    let scores = pipeline::calibrate(&cfg)?;
    println!("calibrated {} channels with {}", scores.width(), scores.metric);
    let spec = pipeline::prune(&cfg)?;
    println!("kept channels {:?}", spec.keep);
    let ft = pipeline::finetune(&cfg)?;
    println!("fine-tuned eval acc {:.3}", ft.epochs.last().and_then(|e| e.eval_acc).unwrap_or(f64::NAN));
    let sweep = pipeline::sweep(&cfg)?;
    println!("tau      acc    routed  cascade  exclusive");
    for r in &sweep.rows {
        println!("{:<8} {:.4} {:.4}  {:>7.3}  {:.3}", r.tau, r.accuracy, r.routed_fraction, r.cost_cascade, r.cost_exclusive);
    }
    pipeline::route(&cfg)?;
    let summary = pipeline::analyze(&cfg)?;
    println!("{summary:#?}");
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}
