//! TOML run configuration.
//!
//! ```toml
//! version = 1
//! out_dir = "out/demo"
//!
//! [dataset]
//! kind = "synthetic"          # or "csv" (path) / "idx" (images, labels)
//! num_classes = 10
//! dim = 16
//! samples_per_class = 120
//! cluster_separation = 2.5
//! noise_sigma = 1.0
//! seed = 7
//!
//! [split]
//! eval_fraction = 0.25
//! seed = 11
//!
//! [network]                   # NetworkSpec, layers tagged by "kind"
//! [teacher]                   # TrainConfig
//! [finetune]                  # TrainConfig
//! [calibration]               # batches, batch_size, seed
//!
//! [prune]
//! metric = "agf"
//! k = 8
//! ramp_steps = 1
//!
//! [route]
//! tau = 0.9
//! taus = [0.0, 0.5, ...]
//!
//! [analysis]
//! stability_trials = 4
//! entropy_bins = 10
//!
//! [seeds]
//! init = 0
//! ```
//!
//! Every field is required. Command-line flags override individual fields;
//! the `CHANPRUNE_OUT` environment variable can only replace `out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_gaussian_clusters, load_csv, load_idx, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::importance::{CalibrationConfig, Metric};
use crate::network::NetworkSpec;
use crate::trainer::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;
pub const OUT_ENV: &str = "CHANPRUNE_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf },
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub eval_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    pub metric: Metric,
    pub k: usize,
    /// Number of prune/fine-tune rounds on a linear width ramp; 1 is one-shot.
    pub ramp_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub tau: f64,
    pub taus: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub stability_trials: usize,
    pub entropy_bins: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Teacher weight initialization.
    pub init: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub out_dir: PathBuf,
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub network: NetworkSpec,
    pub teacher: TrainConfig,
    pub finetune: TrainConfig,
    pub calibration: CalibrationConfig,
    pub prune: PruneConfig,
    pub route: RouteConfig,
    pub analysis: AnalysisConfig,
    pub seeds: Seeds,
}

/// Command-line replacements for single config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub metric: Option<Metric>,
    pub batches: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `CHANPRUNE_OUT` and then `overrides`.
    /// Relative dataset paths resolve against the config file's directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut cfg.dataset {
            DatasetSource::Synthetic(_) => {}
            DatasetSource::Csv { path } => *path = base.join(&*path),
            DatasetSource::Idx { images, labels } => {
                *images = base.join(&*images);
                *labels = base.join(&*labels);
            }
        }
        if let Some(out) = std::env::var_os(OUT_ENV) {
            cfg.out_dir = PathBuf::from(out);
        }
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = &o.out_dir {
            self.out_dir = p.clone();
        }
        if let Some(m) = o.metric {
            self.prune.metric = m;
        }
        if let Some(t) = o.batches {
            self.calibration.batches = t;
        }
        if let Some(k) = o.k {
            self.prune.k = k;
        }
        if let Some(tau) = o.tau {
            self.route.tau = tau;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        if !(self.split.eval_fraction > 0.0 && self.split.eval_fraction < 1.0) {
            return Err(Error::Config(format!("split.eval_fraction {} outside (0, 1)", self.split.eval_fraction)));
        }
        self.network.validate()?;
        self.teacher.validate()?;
        self.finetune.validate()?;
        self.calibration.validate()?;
        let width = self.network.target_width();
        if self.prune.k == 0 || self.prune.k > width {
            return Err(Error::Config(format!("prune.k = {} outside 1..={width}", self.prune.k)));
        }
        if self.prune.ramp_steps == 0 {
            return Err(Error::Config("prune.ramp_steps must be at least 1".into()));
        }
        for &t in std::iter::once(&self.route.tau).chain(&self.route.taus) {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
            }
        }
        if self.analysis.stability_trials < 2 {
            return Err(Error::Config("analysis.stability_trials must be at least 2".into()));
        }
        if self.analysis.entropy_bins == 0 {
            return Err(Error::Config("analysis.entropy_bins must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => gen_gaussian_clusters(s),
            DatasetSource::Csv { path } => load_csv(path),
            DatasetSource::Idx { images, labels } => load_idx(images, labels),
        }
    }

    /// `(train, eval)` split of the configured dataset.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        self.load_dataset()?.split(self.split.eval_fraction, self.split.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = include_str!("../configs/demo.toml");

    #[test]
    fn bundled_demo_parses_and_round_trips() {
        let cfg = RunConfig::from_toml(DEMO).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.route.taus, crate::router::DEFAULT_TAU_GRID.to_vec());
    }

    #[test]
    fn missing_field_is_named() {
        let text = DEMO.replace("ramp_steps = 1\n", "");
        match RunConfig::from_toml(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("ramp_steps"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = RunConfig::from_toml(DEMO).unwrap();
        cfg.apply(&Overrides { metric: Some(Metric::L1), k: Some(3), tau: Some(0.5), ..Default::default() })
            .unwrap();
        assert_eq!((cfg.prune.metric, cfg.prune.k, cfg.route.tau), (Metric::L1, 3, 0.5));
        assert!(cfg.apply(&Overrides { k: Some(0), ..Default::default() }).is_err());
        assert!(cfg.apply(&Overrides { tau: Some(1.5), ..Default::default() }).is_err());
    }
}
