//! Pruned student in front of the full teacher: sweeps the confidence
//! threshold and prints both cost models and their Pareto fronts.
//!
//! `cargo run --release --example cascade_sweep`

use chanprune::data::{gen_gaussian_clusters, SyntheticSpec};
use chanprune::importance::{calibrate_agf, select_topk, CalibrationConfig};
use chanprune::network::{build, NetworkSpec};
use chanprune::router::{pareto_front, sweep, CostModel, DEFAULT_TAU_GRID};
use chanprune::surgeon::{prune_structural, Provenance, PruneSpec};
use chanprune::trainer::{finetune, train, TrainConfig};

fn main() -> chanprune::Result<()> {
    let data = gen_gaussian_clusters(&SyntheticSpec {
        num_classes: 8,
        dim: 16,
        samples_per_class: 120,
        cluster_separation: 3.5,
        noise_sigma: 1.0,
        seed: 4,
    })?;
    let (train_ds, eval_ds) = data.split(0.25, 0)?;
    let spec = NetworkSpec::mlp(16, 64, 8);
    let (teacher, _) = train(&build(&spec, 0)?, &train_ds, &TrainConfig { epochs: 20, ..TrainConfig::teacher() }, None)?;
    let scores = calibrate_agf(&teacher, &train_ds, &CalibrationConfig { batches: 8, batch_size: 32, seed: 0 })?;
    let keep = select_topk(&scores, 6)?;
    let pruned = prune_structural(&teacher, &PruneSpec::new(spec.target_layer, keep, Provenance::default()))?;
    let (student, _) = finetune(&pruned, &train_ds, &TrainConfig::finetune(), None)?;

    let s = sweep(&student, &teacher, &eval_ds, &DEFAULT_TAU_GRID)?;
    println!("student {:.3}, teacher {:.3}, flops {} vs {}", s.pruned_accuracy, s.full_accuracy, s.flops_pruned, s.flops_full);
    println!("{:>6} {:>7} {:>7} {:>8} {:>9}", "tau", "acc", "routed", "cascade", "exclusive");
    for r in &s.rows {
        println!("{:>6} {:>7.4} {:>7.4} {:>8.3} {:>9.3}", r.tau, r.accuracy, r.routed_fraction, r.cost_cascade, r.cost_exclusive);
    }
    for model in [CostModel::Cascade, CostModel::Exclusive] {
        let taus: Vec<f64> = pareto_front(&s, model).iter().map(|r| r.tau).collect();
        println!("{model:?} front: {taus:?}");
    }
    Ok(())
}
