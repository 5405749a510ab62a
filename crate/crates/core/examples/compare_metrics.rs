//! Trains a small teacher, scores its hidden channels with every metric and
//! shows how much the kept sets overlap with AGF's.
//!
//! `cargo run --release --example compare_metrics`

use chanprune::analysis::jaccard;
use chanprune::data::{gen_gaussian_clusters, SyntheticSpec};
use chanprune::importance::{score, select_topk, CalibrationConfig, Metric};
use chanprune::network::{build, NetworkSpec};
use chanprune::trainer::{evaluate, train, TrainConfig};

fn main() -> chanprune::Result<()> {
    let data = gen_gaussian_clusters(&SyntheticSpec {
        num_classes: 6,
        dim: 12,
        samples_per_class: 100,
        cluster_separation: 3.0,
        noise_sigma: 1.0,
        seed: 5,
    })?;
    let (train_ds, eval_ds) = data.split(0.25, 1)?;
    let spec = NetworkSpec::mlp(12, 32, 6);
    let cfg = TrainConfig { epochs: 15, ..TrainConfig::teacher() };
    let (teacher, _) = train(&build(&spec, 0)?, &train_ds, &cfg, None)?;
    println!("teacher eval accuracy {:.3}", evaluate(&teacher, &eval_ds)?);

    let cal = CalibrationConfig { batches: 8, batch_size: 32, seed: 0 };
    let k = 8;
    let agf = select_topk(&score(Metric::Agf, &teacher, &train_ds, &cal)?, k)?;
    for metric in Metric::ALL {
        let keep = select_topk(&score(metric, &teacher, &train_ds, &cal)?, k)?;
        println!("{:>15}: keep {:?}  J(., agf) = {:.3}", metric.name(), keep, jaccard(&keep, &agf));
    }
    Ok(())
}
