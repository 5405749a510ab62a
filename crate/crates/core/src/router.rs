//! Confidence-threshold cascade between a pruned and a full expert.
//!
//! Every sample runs the pruned expert. When its top-1 softmax probability
//! is strictly below `τ` the full expert runs too and its prediction is
//! served instead. Two cost accountings are supported:
//!
//! * cascade, normalized to the pruned expert: `1 + f·R` with
//!   `R = flops_full / flops_pruned`, since routed samples pay for both;
//! * exclusive, normalized to the full expert: `(1-f)·c_pruned + f·c_full`,
//!   counting only the expert whose answer is served.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{count_flops, Checkpoint};
use crate::tensor::{argmax, softmax_rows};
use crate::trainer::logits;

/// Threshold grid of the reference routing sweep.
pub const DEFAULT_TAU_GRID: [f64; 9] = [0.0, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99, 0.999];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    Cascade,
    Exclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub tau: f64,
    pub cost_model: CostModel,
}

impl RoutingPolicy {
    pub fn new(tau: f64, cost_model: CostModel) -> Result<Self> {
        check_tau(tau)?;
        Ok(RoutingPolicy { tau, cost_model })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("threshold {tau} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Pruned,
    Full,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Pruned => "pruned",
            Route::Full => "full",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RouteRow {
    /// Top-1 softmax probability of the pruned expert.
    pub confidence: f64,
    pub route: Route,
    pub prediction: usize,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoutingTrace {
    pub tau: f64,
    /// One row per sample, dataset order.
    pub rows: Vec<RouteRow>,
}

impl RoutingTrace {
    pub fn accuracy(&self) -> f64 {
        self.rows.iter().filter(|r| r.correct).count() as f64 / self.rows.len() as f64
    }

    pub fn routed_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.route == Route::Full).count() as f64 / self.rows.len() as f64
    }
}

/// Both experts evaluated once over a dataset; any threshold can then be
/// applied without re-running the networks.
#[derive(Clone, Debug)]
pub struct ExpertOutputs {
    pub confidence: Vec<f64>,
    pub pruned_pred: Vec<usize>,
    pub full_pred: Vec<usize>,
    pub labels: Vec<usize>,
    pub flops_pruned: f64,
    pub flops_full: f64,
}

impl ExpertOutputs {
    pub fn evaluate(pruned: &Checkpoint, full: &Checkpoint, ds: &Dataset) -> Result<Self> {
        let pc = pruned.spec.num_classes()?;
        let fc = full.spec.num_classes()?;
        if pc != fc {
            return Err(Error::Config(format!("pruned expert has {pc} classes, full expert {fc}")));
        }
        if pruned.spec.input_shape != full.spec.input_shape {
            return Err(Error::Config("experts disagree on input shape".into()));
        }
        let probs = softmax_rows(&logits(pruned, ds)?)?;
        let full_logits = logits(full, ds)?;
        let n = ds.len();
        Ok(ExpertOutputs {
            confidence: (0..n).map(|i| probs.row(i).iter().copied().fold(0.0, f64::max)).collect(),
            pruned_pred: (0..n).map(|i| argmax(probs.row(i))).collect(),
            full_pred: (0..n).map(|i| argmax(full_logits.row(i))).collect(),
            labels: ds.labels().to_vec(),
            flops_pruned: count_flops(pruned)?.total as f64,
            flops_full: count_flops(full)?.total as f64,
        })
    }

    pub fn route(&self, tau: f64) -> Result<RoutingTrace> {
        check_tau(tau)?;
        let rows = (0..self.labels.len())
            .map(|i| {
                let conf = self.confidence[i];
                let (route, prediction) = if conf < tau {
                    (Route::Full, self.full_pred[i])
                } else {
                    (Route::Pruned, self.pruned_pred[i])
                };
                RouteRow { confidence: conf, route, prediction, correct: prediction == self.labels[i] }
            })
            .collect();
        Ok(RoutingTrace { tau, rows })
    }

    pub fn pruned_accuracy(&self) -> f64 {
        hits(&self.pruned_pred, &self.labels)
    }

    pub fn full_accuracy(&self) -> f64 {
        hits(&self.full_pred, &self.labels)
    }

    /// `flops_full / flops_pruned`.
    pub fn cost_ratio(&self) -> f64 {
        self.flops_full / self.flops_pruned
    }
}

fn hits(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

pub fn route_cascade(pruned: &Checkpoint, full: &Checkpoint, ds: &Dataset, tau: f64) -> Result<RoutingTrace> {
    ExpertOutputs::evaluate(pruned, full, ds)?.route(tau)
}

/// Cascade cost normalized so that serving only the pruned expert costs 1.
pub fn cost_cascade(f: f64, flops_pruned: f64, flops_full: f64) -> Result<f64> {
    if !(flops_pruned > 0.0) {
        return Err(Error::Input("pruned expert cost must be positive".into()));
    }
    Ok(1.0 + f * (flops_full / flops_pruned))
}

/// Mixture cost counting only the serving expert.
pub fn cost_exclusive(f: f64, c_pruned: f64, c_full: f64) -> Result<f64> {
    if !(c_pruned > 0.0 && c_full > 0.0) {
        return Err(Error::Input("expert costs must be positive".into()));
    }
    Ok((1.0 - f) * c_pruned + f * c_full)
}

/// Per-sample accounting of both cost models, averaged over the trace.
/// Returned as `(cascade, exclusive)` in the same normalizations as
/// [`cost_cascade`] and [`cost_exclusive`].
pub fn brute_force_costs(trace: &RoutingTrace, flops_pruned: f64, flops_full: f64) -> (f64, f64) {
    let n = trace.rows.len() as f64;
    let mut cascade = 0.0;
    let mut exclusive = 0.0;
    for row in &trace.rows {
        cascade += flops_pruned;
        match row.route {
            Route::Full => {
                cascade += flops_full;
                exclusive += flops_full;
            }
            Route::Pruned => exclusive += flops_pruned,
        }
    }
    (cascade / n / flops_pruned, exclusive / n / flops_full)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub accuracy: f64,
    pub routed_fraction: f64,
    pub cost_cascade: f64,
    pub cost_exclusive: f64,
}

impl SweepRow {
    pub fn cost(&self, model: CostModel) -> f64 {
        match model {
            CostModel::Cascade => self.cost_cascade,
            CostModel::Exclusive => self.cost_exclusive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub flops_pruned: f64,
    pub flops_full: f64,
    pub pruned_accuracy: f64,
    pub full_accuracy: f64,
}

pub fn sweep_outputs(out: &ExpertOutputs, taus: &[f64]) -> Result<SweepResult> {
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    let c_pruned = out.flops_pruned / out.flops_full;
    let rows = taus
        .iter()
        .map(|&tau| {
            let trace = out.route(tau)?;
            let f = trace.routed_fraction();
            Ok(SweepRow {
                tau,
                accuracy: trace.accuracy(),
                routed_fraction: f,
                cost_cascade: cost_cascade(f, out.flops_pruned, out.flops_full)?,
                cost_exclusive: cost_exclusive(f, c_pruned, 1.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        rows,
        flops_pruned: out.flops_pruned,
        flops_full: out.flops_full,
        pruned_accuracy: out.pruned_accuracy(),
        full_accuracy: out.full_accuracy(),
    })
}

pub fn sweep(pruned: &Checkpoint, full: &Checkpoint, ds: &Dataset, taus: &[f64]) -> Result<SweepResult> {
    sweep_outputs(&ExpertOutputs::evaluate(pruned, full, ds)?, taus)
}

/// Rows not dominated under `model` (no other row at least as accurate and
/// at most as costly, one of them strictly), sorted by cost. Of several
/// identical operating points the lowest threshold is kept.
pub fn pareto_front(sweep: &SweepResult, model: CostModel) -> Vec<SweepRow> {
    let rows = &sweep.rows;
    let mut front: Vec<SweepRow> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let dominated = rows.iter().any(|o| {
            o.accuracy >= r.accuracy
                && o.cost(model) <= r.cost(model)
                && (o.accuracy > r.accuracy || o.cost(model) < r.cost(model))
        });
        let duplicate_of_earlier = rows[..i]
            .iter()
            .any(|o| o.accuracy == r.accuracy && o.cost(model) == r.cost(model) && o.tau <= r.tau);
        let duplicate_of_lower_tau = rows[i + 1..]
            .iter()
            .any(|o| o.accuracy == r.accuracy && o.cost(model) == r.cost(model) && o.tau < r.tau);
        if !dominated && !duplicate_of_earlier && !duplicate_of_lower_tau {
            front.push(*r);
        }
    }
    front.sort_by(|a, b| a.cost(model).total_cmp(&b.cost(model)).then(a.tau.total_cmp(&b.tau)));
    front
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outputs(conf: &[f64], pruned: &[usize], full: &[usize], labels: &[usize]) -> ExpertOutputs {
        ExpertOutputs {
            confidence: conf.to_vec(),
            pruned_pred: pruned.to_vec(),
            full_pred: full.to_vec(),
            labels: labels.to_vec(),
            flops_pruned: 10.0,
            flops_full: 1504.1,
        }
    }

    #[test]
    fn threshold_rule() {
        let o = outputs(&[0.9, 0.3], &[0, 0], &[1, 1], &[0, 1]);
        let t = o.route(0.5).unwrap();
        assert_eq!(t.rows[0].route, Route::Pruned);
        assert_eq!(t.rows[1].route, Route::Full);
        assert_eq!(t.routed_fraction(), 0.5);
        assert_eq!(t.accuracy(), 1.0);
        // strict inequality
        assert_eq!(o.route(0.9).unwrap().rows[0].route, Route::Pruned);
        assert!(o.route(1.5).is_err());
    }

    #[test]
    fn endpoints() {
        let o = outputs(&[0.99, 0.51, 0.7], &[0, 1, 2], &[0, 0, 0], &[0, 0, 2]);
        let t0 = o.route(0.0).unwrap();
        assert_eq!(t0.routed_fraction(), 0.0);
        assert_eq!(t0.accuracy(), o.pruned_accuracy());
        let t1 = o.route(1.0).unwrap();
        assert_eq!(t1.routed_fraction(), 1.0);
        assert_eq!(t1.accuracy(), o.full_accuracy());
    }

    #[test]
    fn cost_formulas() {
        assert_eq!(cost_cascade(0.0, 1.0, 150.41).unwrap(), 1.0);
        assert!((cost_cascade(0.5, 1.0, 150.41).unwrap() - 76.205).abs() < 1e-12);
        assert_eq!(cost_cascade(1.0, 3.0, 0.0).unwrap(), 1.0);
        assert!(cost_cascade(0.5, 0.0, 1.0).is_err());
        assert!((cost_exclusive(0.5, 0.85, 1.0).unwrap() - 0.925).abs() < 1e-12);
        assert_eq!(cost_exclusive(1.0, 0.85, 1.0).unwrap(), 1.0);
        assert_eq!(cost_exclusive(0.0, 0.85, 1.0).unwrap(), 0.85);
    }

    #[test]
    fn sweep_brute_force_agrees() {
        let conf = [0.95, 0.4, 0.72, 0.81, 0.999, 0.5, 0.66];
        let o = outputs(&conf, &[0; 7], &[1; 7], &[0, 1, 0, 1, 0, 1, 0]);
        let s = sweep_outputs(&o, &DEFAULT_TAU_GRID).unwrap();
        for row in &s.rows {
            let (c, e) = brute_force_costs(&o.route(row.tau).unwrap(), o.flops_pruned, o.flops_full);
            assert!((c - row.cost_cascade).abs() <= 1e-12);
            assert!((e - row.cost_exclusive).abs() <= 1e-12);
            let cdf = conf.iter().filter(|&&c| c < row.tau).count() as f64 / 7.0;
            assert_eq!(row.routed_fraction, cdf);
        }
        assert!(sweep_outputs(&o, &[0.5, 0.2]).is_err());
    }

    fn sr(rows: &[(f64, f64, f64)]) -> SweepResult {
        SweepResult {
            rows: rows
                .iter()
                .map(|&(tau, accuracy, cost)| SweepRow {
                    tau,
                    accuracy,
                    routed_fraction: 0.0,
                    cost_cascade: cost,
                    cost_exclusive: cost,
                })
                .collect(),
            flops_pruned: 1.0,
            flops_full: 1.0,
            pruned_accuracy: 0.0,
            full_accuracy: 0.0,
        }
    }

    #[test]
    fn pareto_cases() {
        let s = sr(&[(0.0, 0.6, 1.0), (0.5, 0.7, 2.0), (0.7, 0.65, 3.0)]);
        let f: Vec<(f64, f64)> = pareto_front(&s, CostModel::Cascade).iter().map(|r| (r.accuracy, r.cost_cascade)).collect();
        assert_eq!(f, vec![(0.6, 1.0), (0.7, 2.0)]);

        let one = sr(&[(0.3, 0.5, 4.0)]);
        assert_eq!(pareto_front(&one, CostModel::Exclusive).len(), 1);

        let dup = sr(&[(0.2, 0.5, 1.0), (0.4, 0.5, 1.0)]);
        let f = pareto_front(&dup, CostModel::Cascade);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].tau, 0.2);
    }
}
