//! Self-contained demonstrations with a pass/fail verdict each.

use std::path::Path;

use serde::Serialize;

use crate::analysis::{proxy_fidelity, ProxyFidelityReport};
use crate::data::{gen_cancellation_probe, gen_gaussian_clusters, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::importance::{calibrate_agf, median, score, score_taylor_feature, select_topk, CalibrationConfig, Metric};
use crate::network::{build, Checkpoint, NetworkSpec};
use crate::report::{emit_csv, real, CsvReport};
use crate::surgeon::{prune_structural, scratch_variant, Provenance, PruneSpec};
use crate::trainer::{evaluate, finetune, train, TrainConfig};

fn write_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CancellationResult {
    pub channel: usize,
    pub agf: Vec<f64>,
    pub taylor_feature: Vec<f64>,
    pub agf_median: f64,
    pub taylor_median: f64,
    pub pass: bool,
}

impl CancellationResult {
    pub fn summary(&self) -> String {
        let c = self.channel;
        format!(
            "{}: channel {c} AGF {:.4} (median {:.4}), net Taylor {:.3e} (median {:.4})",
            verdict(self.pass),
            self.agf[c],
            self.agf_median,
            self.taylor_feature[c],
            self.taylor_median
        )
    }
}

impl CsvReport for CancellationResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["channel", "agf", "taylor_feature"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..self.agf.len()).map(|c| vec![c.to_string(), real(self.agf[c]), real(self.taylor_feature[c])]).collect()
    }
}

/// Probe calibration: four batches of 32 cover the whole probe dataset.
pub const PROBE_CALIBRATION: CalibrationConfig = CalibrationConfig { batches: 4, batch_size: 32, seed: 0 };

/// Scores the hand-built probe with AGF and net feature Taylor. Passes when
/// the designated channel's net term vanishes (< 1e-6) while its AGF score
/// exceeds 0.1, AGF places it above the median and net Taylor below.
pub fn demo_cancellation(out_dir: Option<&Path>) -> Result<CancellationResult> {
    let probe = gen_cancellation_probe(0)?;
    let agf = calibrate_agf(&probe.model, &probe.dataset, &PROBE_CALIBRATION)?.scores;
    let taylor = score_taylor_feature(&probe.model, &probe.dataset, &PROBE_CALIBRATION)?.scores;
    let c = probe.designated;
    let (am, tm) = (median(&agf), median(&taylor));
    let pass = taylor[c].abs() < 1e-6 && agf[c] > 0.1 && agf[c] > am && taylor[c] < tm;
    let result = CancellationResult { channel: c, agf, taylor_feature: taylor, agf_median: am, taylor_median: tm, pass };
    if let Some(dir) = out_dir {
        write_dir(dir)?;
        emit_csv(&result, &dir.join("cancellation_scores.csv"))?;
    }
    Ok(result)
}

/// Settings of the extreme-sparsity comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTransitionConfig {
    pub data: SyntheticSpec,
    pub eval_fraction: f64,
    /// Hidden widths; the middle one is pruned.
    pub hidden: Vec<usize>,
    pub k: usize,
    pub teacher: TrainConfig,
    pub finetune: TrainConfig,
    pub calibration: CalibrationConfig,
    pub seeds: Vec<u64>,
    /// Required lead of every inherited variant over scratch, in accuracy
    /// (0.05 = five points).
    pub margin: f64,
}

impl Default for PhaseTransitionConfig {
    fn default() -> Self {
        PhaseTransitionConfig {
            data: SyntheticSpec {
                num_classes: 10,
                dim: 32,
                samples_per_class: 200,
                cluster_separation: 4.0,
                noise_sigma: 1.0,
                seed: 21,
            },
            eval_fraction: 0.25,
            hidden: vec![64; 5],
            k: 4,
            teacher: TrainConfig { seed: 100, ..TrainConfig::teacher() },
            finetune: TrainConfig::finetune(),
            calibration: CalibrationConfig { batches: 8, batch_size: 32, seed: 0 },
            seeds: vec![0, 1, 2, 3, 4],
            margin: 0.05,
        }
    }
}

pub const PHASE_VARIANTS: [&str; 4] = ["random", "l1", "agf", "scratch"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTransitionResult {
    pub teacher_accuracy: f64,
    /// `(seed, variant, eval accuracy)`.
    pub runs: Vec<(u64, &'static str, f64)>,
    pub margin: f64,
    pub pass: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

impl PhaseTransitionResult {
    pub fn accuracies(&self, variant: &str) -> Vec<f64> {
        self.runs.iter().filter(|r| r.1 == variant).map(|r| r.2).collect()
    }

    /// Mean and sample standard deviation across seeds.
    pub fn stats(&self, variant: &str) -> (f64, f64) {
        mean_std(&self.accuracies(variant))
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}: teacher {:.4}", verdict(self.pass), self.teacher_accuracy);
        for v in PHASE_VARIANTS {
            let (m, sd) = self.stats(v);
            s.push_str(&format!("; {v} {m:.4} ± {sd:.4}"));
        }
        s
    }
}

impl CsvReport for PhaseTransitionResult {
    fn header(&self) -> Vec<&'static str> {
        vec!["seed", "variant", "accuracy"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.runs.iter().map(|&(s, v, a)| vec![s.to_string(), v.into(), real(a)]).collect()
    }
}

fn phase_data(cfg: &PhaseTransitionConfig) -> Result<(Dataset, Dataset)> {
    gen_gaussian_clusters(&cfg.data)?.split(cfg.eval_fraction, cfg.data.seed)
}

/// Trains one teacher, then for every seed prunes it to `k` channels under
/// random, ℓ1 and AGF selection, fine-tunes each, and trains a freshly
/// initialized narrow network of the same shape with the same recipe.
/// Passes when every inherited variant's mean beats scratch by `margin` and
/// AGF's across-seed spread is no larger than random's.
pub fn demo_phase_transition(cfg: &PhaseTransitionConfig, out_dir: Option<&Path>) -> Result<PhaseTransitionResult> {
    let (train_ds, eval_ds) = phase_data(cfg)?;
    let spec = NetworkSpec::deep_mlp(cfg.data.dim, &cfg.hidden, cfg.data.num_classes, cfg.hidden.len() / 2);
    let (teacher, _) = train(&build(&spec, cfg.teacher.seed)?, &train_ds, &cfg.teacher, None)?;
    let teacher_accuracy = evaluate(&teacher, &eval_ds)?;

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let cal = CalibrationConfig { seed: cfg.calibration.seed.wrapping_add(seed), ..cfg.calibration };
        let ft = TrainConfig { seed: cfg.finetune.seed.wrapping_add(seed), ..cfg.finetune };
        let mut narrow = None;
        for (name, metric) in [("random", Metric::Random), ("l1", Metric::L1), ("agf", Metric::Agf)] {
            let table = score(metric, &teacher, &train_ds, &cal)?;
            let keep = select_topk(&table, cfg.k)?;
            let prov = Provenance { metric: metric.name().into(), k: cfg.k, calibration_seed: cal.seed };
            let pruned = prune_structural(&teacher, &PruneSpec::new(spec.target_layer, keep, prov))?;
            let (tuned, _) = finetune(&pruned, &train_ds, &ft, None)?;
            runs.push((seed, name, evaluate(&tuned, &eval_ds)?));
            narrow.get_or_insert(pruned.spec);
        }
        let scratch = scratch_variant(&narrow.expect("three variants ran"), 1000 + seed)?;
        let (tuned, _) = train(&scratch, &train_ds, &ft, None)?;
        runs.push((seed, "scratch", evaluate(&tuned, &eval_ds)?));
    }

    let mut result = PhaseTransitionResult { teacher_accuracy, runs, margin: cfg.margin, pass: false };
    let scratch = result.stats("scratch").0;
    let inherited_lead = ["random", "l1", "agf"].iter().all(|v| result.stats(v).0 - scratch >= cfg.margin);
    result.pass = inherited_lead && result.stats("agf").1 <= result.stats("random").1;
    if let Some(dir) = out_dir {
        write_dir(dir)?;
        emit_csv(&result, &dir.join("phase_transition.csv"))?;
    }
    Ok(result)
}

/// Settings of the proxy-fidelity measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxyFidelityConfig {
    pub data: SyntheticSpec,
    /// Hidden widths; the middle one is pruned.
    pub hidden: Vec<usize>,
    pub k: usize,
    pub teacher: TrainConfig,
    pub finetune: TrainConfig,
    pub calibration: CalibrationConfig,
    pub seeds: Vec<u64>,
}

impl Default for ProxyFidelityConfig {
    fn default() -> Self {
        let pt = PhaseTransitionConfig::default();
        ProxyFidelityConfig {
            data: pt.data,
            hidden: pt.hidden,
            k: 8,
            teacher: pt.teacher,
            finetune: pt.finetune,
            calibration: pt.calibration,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxyFidelityDemo {
    /// One report per seed, teacher vs AGF-pruned and fine-tuned student.
    pub reports: Vec<(u64, ProxyFidelityReport)>,
    pub pass: bool,
}

impl ProxyFidelityDemo {
    pub fn summary(&self) -> String {
        let mut s = format!("{}: AGF ratio < l1 ratio on {}/{} seeds", verdict(self.pass), self.passing(), self.reports.len());
        for (seed, r) in &self.reports {
            s.push_str(&format!(
                "\n  seed {seed}: l1 {} / {} = {}, AGF {} / {} = {}",
                fmt_sig(r.l1_full),
                fmt_sig(r.l1_pruned),
                fmt_ratio(r.l1_ratio()),
                fmt_sig(r.agf_full),
                fmt_sig(r.agf_pruned),
                fmt_ratio(r.agf_ratio())
            ));
        }
        s
    }

    fn passing(&self) -> usize {
        self.reports.iter().filter(|(_, r)| ordered(r)).count()
    }
}

fn fmt_sig(v: f64) -> String {
    format!("{v:.4e}")
}

fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), |v| format!("{v:.2}x"))
}

fn ordered(r: &ProxyFidelityReport) -> bool {
    matches!((r.agf_ratio(), r.l1_ratio()), (Some(a), Some(l)) if a < l)
}

impl CsvReport for ProxyFidelityDemo {
    fn header(&self) -> Vec<&'static str> {
        vec!["seed", "l1_full", "l1_pruned", "l1_ratio", "agf_full", "agf_pruned", "agf_ratio"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let cell = |r: Option<f64>| r.map(real).unwrap_or_else(|| "undefined".into());
        self.reports
            .iter()
            .map(|(s, r)| {
                vec![
                    s.to_string(),
                    real(r.l1_full),
                    real(r.l1_pruned),
                    cell(r.l1_ratio()),
                    real(r.agf_full),
                    real(r.agf_pruned),
                    cell(r.agf_ratio()),
                ]
            })
            .collect()
    }
}

/// For each seed: train a teacher, prune it to `k` by AGF, fine-tune, and
/// compare summed ℓ1 mass and summed AGF utility of the target layer.
/// Passes when the AGF ratio stays below the ℓ1 ratio on every seed.
pub fn demo_proxy_fidelity(cfg: &ProxyFidelityConfig, out_dir: Option<&Path>) -> Result<ProxyFidelityDemo> {
    let (train_ds, _) = gen_gaussian_clusters(&cfg.data)?.split(0.25, cfg.data.seed)?;
    let spec = NetworkSpec::deep_mlp(cfg.data.dim, &cfg.hidden, cfg.data.num_classes, cfg.hidden.len() / 2);
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let tc = TrainConfig { seed: cfg.teacher.seed.wrapping_add(seed), ..cfg.teacher };
        let (teacher, _) = train(&build(&spec, tc.seed)?, &train_ds, &tc, None)?;
        let student = agf_student(&teacher, &train_ds, cfg, seed)?;
        reports.push((seed, proxy_fidelity(&teacher, &student, &train_ds, &cfg.calibration)?));
    }
    let mut demo = ProxyFidelityDemo { reports, pass: false };
    demo.pass = demo.passing() == demo.reports.len();
    if let Some(dir) = out_dir {
        write_dir(dir)?;
        emit_csv(&demo, &dir.join("proxy_fidelity.csv"))?;
    }
    Ok(demo)
}

fn agf_student(teacher: &Checkpoint, ds: &Dataset, cfg: &ProxyFidelityConfig, seed: u64) -> Result<Checkpoint> {
    let keep = select_topk(&calibrate_agf(teacher, ds, &cfg.calibration)?, cfg.k)?;
    let prov = Provenance { metric: Metric::Agf.name().into(), k: cfg.k, calibration_seed: cfg.calibration.seed };
    let pruned = prune_structural(teacher, &PruneSpec::new(teacher.spec.target_layer, keep, prov))?;
    let ft = TrainConfig { seed: cfg.finetune.seed.wrapping_add(seed), ..cfg.finetune };
    Ok(finetune(&pruned, ds, &ft, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_passes() {
        let r = demo_cancellation(None).unwrap();
        assert!(r.pass, "{}", r.summary());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
