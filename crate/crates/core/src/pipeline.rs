//! File-backed experiment stages.
//!
//! Each stage reads its inputs from the run's output directory and writes
//! its artifacts there, so any stage can be rerun on its own. A missing
//! input is reported as [`Error::Dependency`] naming the file.
//!
//! | stage          | reads                               | writes |
//! |----------------|-------------------------------------|--------|
//! | train-teacher  |                                     | `teacher.ckpt`, `teacher_history.csv` |
//! | calibrate      | `teacher.ckpt`                      | `scores_<metric>.csv` |
//! | prune          | `teacher.ckpt`, `scores_<metric>.csv` | `prune_spec.json`, `pruned.ckpt` |
//! | finetune       | `pruned.ckpt`                       | `finetuned.ckpt`, `finetune_history.csv` |
//! | route          | `teacher.ckpt`, `finetuned.ckpt`    | `trace.csv` |
//! | sweep          | `teacher.ckpt`, `finetuned.ckpt`    | `sweep.csv`, `pareto_cascade.csv`, `pareto_exclusive.csv` |
//! | analyze        | `teacher.ckpt`, `finetuned.ckpt`    | `stability.csv`, `orthogonality.csv`, `proxy_fidelity.csv`, `entropy.csv`, `summary.json` |
//!
//! Training and calibration use the train split, routing and the sweep the
//! eval split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{entropy_buckets, orthogonality, proxy_fidelity, stability};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::importance::{calibrate_agf, score, score_l1, select_topk, ChannelScoreTable, Metric};
use crate::network::{build, Checkpoint};
use crate::report::{emit_csv, emit_json, read_score_table, ParetoRows};
use crate::router::{pareto_front, CostModel, ExpertOutputs, RoutingTrace, SweepResult};
use crate::surgeon::{prune_structural, Provenance, PruneSpec};
use crate::trainer::{evaluate, train, TrainHistory};

pub const TEACHER: &str = "teacher.ckpt";
pub const TEACHER_HISTORY: &str = "teacher_history.csv";
pub const PRUNE_SPEC: &str = "prune_spec.json";
pub const PRUNED: &str = "pruned.ckpt";
pub const FINETUNED: &str = "finetuned.ckpt";
pub const FINETUNE_HISTORY: &str = "finetune_history.csv";
pub const TRACE: &str = "trace.csv";
pub const SWEEP: &str = "sweep.csv";
pub const PARETO_CASCADE: &str = "pareto_cascade.csv";
pub const PARETO_EXCLUSIVE: &str = "pareto_exclusive.csv";
pub const STABILITY: &str = "stability.csv";
pub const ORTHOGONALITY: &str = "orthogonality.csv";
pub const PROXY_FIDELITY: &str = "proxy_fidelity.csv";
pub const ENTROPY: &str = "entropy.csv";
pub const SUMMARY: &str = "summary.json";

pub fn scores_file(metric: Metric) -> String {
    format!("scores_{}.csv", metric.name())
}

fn out(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    Ok(cfg.out_dir.join(name))
}

fn require(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let p = cfg.out_dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Dependency(p))
    }
}

fn load_teacher(cfg: &RunConfig) -> Result<Checkpoint> {
    checkpoint::load_for(&require(cfg, TEACHER)?, &cfg.network)
}

pub fn train_teacher(cfg: &RunConfig) -> Result<TrainHistory> {
    let (train_ds, eval_ds) = cfg.datasets()?;
    let init = build(&cfg.network, cfg.seeds.init)?;
    let (teacher, history) = train(&init, &train_ds, &cfg.teacher, Some(&eval_ds))?;
    checkpoint::save(&teacher, &out(cfg, TEACHER)?)?;
    emit_csv(&history, &out(cfg, TEACHER_HISTORY)?)?;
    Ok(history)
}

pub fn calibrate(cfg: &RunConfig) -> Result<ChannelScoreTable> {
    let teacher = load_teacher(cfg)?;
    let (train_ds, _) = cfg.datasets()?;
    let table = score(cfg.prune.metric, &teacher, &train_ds, &cfg.calibration)?;
    emit_csv(&table, &out(cfg, &scores_file(cfg.prune.metric))?)?;
    Ok(table)
}

/// Channel widths visited by an `n`-step linear ramp from `width` to `k`.
pub fn ramp_widths(width: usize, k: usize, steps: usize) -> Vec<usize> {
    (1..=steps).map(|i| width - ((width - k) * i + steps / 2) / steps).collect()
}

pub fn prune(cfg: &RunConfig) -> Result<PruneSpec> {
    let teacher = load_teacher(cfg)?;
    let metric = cfg.prune.metric;
    let provenance = Provenance { metric: metric.name().into(), k: cfg.prune.k, calibration_seed: cfg.calibration.seed };
    let (spec, pruned) = if cfg.prune.ramp_steps == 1 {
        let table = read_score_table(&require(cfg, &scores_file(metric))?)?;
        if table.metric != metric || table.width() != cfg.network.target_width() {
            return Err(Error::SpecMismatch(format!(
                "{} holds {} scores for {} channels",
                scores_file(metric),
                table.metric,
                table.width()
            )));
        }
        let spec = PruneSpec::new(cfg.network.target_layer, select_topk(&table, cfg.prune.k)?, provenance);
        let pruned = prune_structural(&teacher, &spec)?;
        (spec, pruned)
    } else {
        ramp_prune(cfg, &teacher, provenance)?
    };
    spec.save(&out(cfg, PRUNE_SPEC)?)?;
    checkpoint::save(&pruned, &out(cfg, PRUNED)?)?;
    Ok(spec)
}

/// Rescores, prunes and briefly fine-tunes on a linear width ramp; the last
/// surgery is left for the finetune stage to recover.
fn ramp_prune(cfg: &RunConfig, teacher: &Checkpoint, provenance: Provenance) -> Result<(PruneSpec, Checkpoint)> {
    let (train_ds, _) = cfg.datasets()?;
    let width = cfg.network.target_width();
    let steps = cfg.prune.ramp_steps;
    let mut model = teacher.clone();
    let mut original: Vec<usize> = (0..width).collect();
    for (i, k) in ramp_widths(width, cfg.prune.k, steps).into_iter().enumerate() {
        let table = score(cfg.prune.metric, &model, &train_ds, &cfg.calibration)?;
        let keep = select_topk(&table, k)?;
        let step = PruneSpec::new(cfg.network.target_layer, keep.clone(), provenance.clone());
        model = prune_structural(&model, &step)?;
        original = keep.iter().map(|&c| original[c]).collect();
        if i + 1 < steps {
            let ft = crate::trainer::TrainConfig { epochs: cfg.finetune.epochs.div_ceil(steps), ..cfg.finetune };
            model = train(&model, &train_ds, &ft, None)?.0;
        }
    }
    Ok((PruneSpec::new(cfg.network.target_layer, original, provenance), model))
}

pub fn finetune(cfg: &RunConfig) -> Result<TrainHistory> {
    let pruned = checkpoint::load(&require(cfg, PRUNED)?)?;
    let (train_ds, eval_ds) = cfg.datasets()?;
    let (tuned, history) = crate::trainer::finetune(&pruned, &train_ds, &cfg.finetune, Some(&eval_ds))?;
    checkpoint::save(&tuned, &out(cfg, FINETUNED)?)?;
    emit_csv(&history, &out(cfg, FINETUNE_HISTORY)?)?;
    Ok(history)
}

fn experts(cfg: &RunConfig) -> Result<ExpertOutputs> {
    let teacher = load_teacher(cfg)?;
    let tuned = checkpoint::load(&require(cfg, FINETUNED)?)?;
    let (_, eval_ds) = cfg.datasets()?;
    ExpertOutputs::evaluate(&tuned, &teacher, &eval_ds)
}

pub fn route(cfg: &RunConfig) -> Result<RoutingTrace> {
    let trace = experts(cfg)?.route(cfg.route.tau)?;
    emit_csv(&trace, &out(cfg, TRACE)?)?;
    Ok(trace)
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let result = crate::router::sweep_outputs(&experts(cfg)?, &cfg.route.taus)?;
    emit_csv(&result, &out(cfg, SWEEP)?)?;
    emit_csv(&ParetoRows(&pareto_front(&result, CostModel::Cascade)), &out(cfg, PARETO_CASCADE)?)?;
    emit_csv(&ParetoRows(&pareto_front(&result, CostModel::Exclusive)), &out(cfg, PARETO_EXCLUSIVE)?)?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub teacher_accuracy: f64,
    pub finetuned_accuracy: f64,
    pub stability_metric: Metric,
    pub stability_mean_jaccard: f64,
    pub orthogonality_jaccard: f64,
    pub l1_ratio: Option<f64>,
    pub agf_ratio: Option<f64>,
    pub tau: f64,
    pub routed_fraction: f64,
    pub mean_entropy_pruned_route: Option<f64>,
    pub mean_entropy_full_route: Option<f64>,
}

/// AGF stability across disjoint slices, AGF vs ℓ1 orthogonality, proxy
/// fidelity of teacher vs fine-tuned, and entropy buckets at the
/// configured threshold.
pub fn analyze(cfg: &RunConfig) -> Result<AnalysisSummary> {
    let teacher = load_teacher(cfg)?;
    let tuned = checkpoint::load(&require(cfg, FINETUNED)?)?;
    let (train_ds, eval_ds) = cfg.datasets()?;
    let k = cfg.prune.k;

    let stab = stability(Metric::Agf, &teacher, &train_ds, k, cfg.analysis.stability_trials, &cfg.calibration)?;
    emit_csv(&stab, &out(cfg, STABILITY)?)?;

    let agf = calibrate_agf(&teacher, &train_ds, &cfg.calibration)?;
    let orth = orthogonality(&agf, &score_l1(&teacher), k)?;
    emit_csv(&orth, &out(cfg, ORTHOGONALITY)?)?;

    let proxy = proxy_fidelity(&teacher, &tuned, &train_ds, &cfg.calibration)?;
    emit_csv(&proxy, &out(cfg, PROXY_FIDELITY)?)?;

    let outputs = ExpertOutputs::evaluate(&tuned, &teacher, &eval_ds)?;
    let trace = outputs.route(cfg.route.tau)?;
    let buckets = entropy_buckets(&trace, &teacher, &eval_ds, cfg.analysis.entropy_bins)?;
    emit_csv(&buckets, &out(cfg, ENTROPY)?)?;

    let summary = AnalysisSummary {
        teacher_accuracy: evaluate(&teacher, &eval_ds)?,
        finetuned_accuracy: evaluate(&tuned, &eval_ds)?,
        stability_metric: Metric::Agf,
        stability_mean_jaccard: stab.mean,
        orthogonality_jaccard: orth.jaccard,
        l1_ratio: proxy.l1_ratio(),
        agf_ratio: proxy.agf_ratio(),
        tau: cfg.route.tau,
        routed_fraction: trace.routed_fraction(),
        mean_entropy_pruned_route: buckets.mean_entropy(&trace, crate::router::Route::Pruned),
        mean_entropy_full_route: buckets.mean_entropy(&trace, crate::router::Route::Full),
    };
    emit_json(&summary, &out(cfg, SUMMARY)?)?;
    Ok(summary)
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<AnalysisSummary> {
    train_teacher(cfg)?;
    calibrate(cfg)?;
    prune(cfg)?;
    finetune(cfg)?;
    route(cfg)?;
    sweep(cfg)?;
    analyze(cfg)
}

/// Path of `name` inside the run directory.
pub fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_reaches_k() {
        assert_eq!(ramp_widths(64, 8, 1), vec![8]);
        assert_eq!(ramp_widths(64, 8, 4), vec![50, 36, 22, 8]);
        let w = ramp_widths(10, 3, 3);
        assert_eq!(*w.last().unwrap(), 3);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn missing_upstream_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::from_toml(include_str!("../configs/demo.toml")).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        match prune(&cfg) {
            Err(Error::Dependency(p)) => assert!(p.ends_with(TEACHER)),
            other => panic!("expected dependency error, got {other:?}"),
        }
        match sweep(&cfg) {
            Err(Error::Dependency(p)) => assert!(p.ends_with(TEACHER)),
            other => panic!("expected dependency error, got {other:?}"),
        }
    }
}
