//! Top-k agreement of one metric across disjoint calibration slices,
//! against the agreement between two different metrics.
//!
//! `cargo run --release --example stability`

use chanprune::analysis::{orthogonality, stability};
use chanprune::data::{gen_gaussian_clusters, SyntheticSpec};
use chanprune::importance::{calibrate_agf, score_l1, CalibrationConfig, Metric};
use chanprune::network::{build, NetworkSpec};
use chanprune::trainer::{train, TrainConfig};

fn main() -> chanprune::Result<()> {
    let ds = gen_gaussian_clusters(&SyntheticSpec {
        num_classes: 10,
        dim: 16,
        samples_per_class: 120,
        cluster_separation: 3.0,
        noise_sigma: 1.0,
        seed: 7,
    })?;
    let spec = NetworkSpec::mlp(16, 64, 10);
    let (teacher, _) = train(&build(&spec, 0)?, &ds, &TrainConfig { epochs: 20, ..TrainConfig::teacher() }, None)?;
    let cal = CalibrationConfig { batches: 8, batch_size: 32, seed: 3 };
    let k = 8;
    for metric in [Metric::Agf, Metric::TaylorFeature, Metric::Random] {
        let r = stability(metric, &teacher, &ds, k, 4, &cal)?;
        println!("{:>15} stability: mean Jaccard {:.3}", metric.name(), r.mean);
    }
    let o = orthogonality(&calibrate_agf(&teacher, &ds, &cal)?, &score_l1(&teacher), k)?;
    println!("J(agf, l1) = {:.3}", o.jaccard);
    Ok(())
}
