//! After surgery the inherited network starts at the teacher's masked
//! accuracy; a scratch network of the same shape has to climb there.

use std::collections::BTreeSet;

use chanprune::data::gen_gaussian_clusters;
use chanprune::demos::PhaseTransitionConfig;
use chanprune::importance::{calibrate_agf, select_topk, CalibrationConfig};
use chanprune::network::{build, forward_masked, NetworkSpec};
use chanprune::surgeon::{complement, prune_structural, scratch_variant, Provenance, PruneSpec};
use chanprune::trainer::{accuracy, evaluate, finetune, train, TrainConfig, TrainHistory};

/// Epochs until eval accuracy first reaches `target`; 0 if it starts
/// there, `None` if it never does.
fn epochs_to_reach(start: f64, history: &TrainHistory, target: f64) -> Option<usize> {
    if start >= target {
        return Some(0);
    }
    history.epochs.iter().position(|e| e.eval_acc.unwrap() >= target).map(|i| i + 1)
}

#[test]
fn inherited_recovers_faster_than_scratch() {
    let cfg = PhaseTransitionConfig::default();
    let (train_ds, eval_ds) = gen_gaussian_clusters(&cfg.data).unwrap().split(cfg.eval_fraction, cfg.data.seed).unwrap();
    let spec = NetworkSpec::deep_mlp(cfg.data.dim, &cfg.hidden, cfg.data.num_classes, cfg.hidden.len() / 2);
    let (teacher, _) = train(&build(&spec, cfg.teacher.seed).unwrap(), &train_ds, &cfg.teacher, None).unwrap();

    let budget = cfg.finetune.epochs;
    let (mut inherited_total, mut scratch_total) = (0, 0);
    for &seed in &cfg.seeds {
        let cal = CalibrationConfig { seed, ..cfg.calibration };
        let keep = select_topk(&calibrate_agf(&teacher, &train_ds, &cal).unwrap(), cfg.k).unwrap();
        let removed: BTreeSet<usize> = complement(&keep, spec.target_width());
        let masked = forward_masked(&teacher, eval_ds.inputs(), &removed).unwrap();
        let target = accuracy(&masked, eval_ds.labels()).unwrap();

        let pruned = prune_structural(&teacher, &PruneSpec::new(spec.target_layer, keep, Provenance::default())).unwrap();
        let ft = TrainConfig { seed, ..cfg.finetune };
        let (_, h) = finetune(&pruned, &train_ds, &ft, Some(&eval_ds)).unwrap();
        let inherited = epochs_to_reach(evaluate(&pruned, &eval_ds).unwrap(), &h, target).unwrap_or(budget + 1);

        let scratch = scratch_variant(&pruned.spec, 1000 + seed).unwrap();
        let (_, h) = train(&scratch, &train_ds, &ft, Some(&eval_ds)).unwrap();
        let from_scratch = epochs_to_reach(evaluate(&scratch, &eval_ds).unwrap(), &h, target).unwrap_or(budget + 1);

        assert!(inherited <= from_scratch, "seed {seed}: inherited {inherited} scratch {from_scratch}");
        inherited_total += inherited;
        scratch_total += from_scratch;
    }
    assert!(inherited_total < scratch_total, "inherited {inherited_total} vs scratch {scratch_total}");
}
