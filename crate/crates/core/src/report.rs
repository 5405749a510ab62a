//! CSV and JSON emission for every report type.
//!
//! Reals are written in Rust's shortest round-trip form, so re-parsing a
//! file recovers every value bit for bit. Output depends only on the report
//! contents.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{EntropyBucketReport, OrthogonalityReport, ProxyFidelityReport, StabilityReport};
use crate::error::{Error, Result};
use crate::importance::{ChannelScoreTable, Metric};
use crate::router::{RoutingTrace, SweepResult, SweepRow};
use crate::trainer::TrainHistory;

pub trait CsvReport {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

pub fn real(v: f64) -> String {
    format!("{v:?}")
}

pub fn to_csv_string(report: &dyn CsvReport) -> String {
    let mut out = report.header().join(",");
    out.push('\n');
    for row in report.rows() {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(report: &dyn CsvReport, path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(report)).map_err(|e| Error::io(path, e))
}

/// Pretty JSON for reports with nested structure.
pub fn emit_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::FormatLine { line: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::FormatLine {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

impl CsvReport for ChannelScoreTable {
    fn header(&self) -> Vec<&'static str> {
        vec!["metric", "layer", "channel", "score"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.scores
            .iter()
            .enumerate()
            .map(|(c, &s)| vec![self.metric.name().into(), self.layer.to_string(), c.to_string(), real(s)])
            .collect()
    }
}

/// Reads a score table written by [`emit_csv`]. Calibration settings are
/// not part of the file and come back as zero.
pub fn read_score_table(path: &Path) -> Result<ChannelScoreTable> {
    let (header, rows) = read_csv(path)?;
    if header != ["metric", "layer", "channel", "score"] {
        return Err(Error::FormatLine { line: 1, msg: format!("unexpected header {header:?}") });
    }
    let bad = |line: usize, msg: String| Error::FormatLine { line: line as u64 + 2, msg };
    let mut metric = None;
    let mut layer = None;
    let mut scores = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let m: Metric = row[0].parse().map_err(|e: Error| bad(i, e.to_string()))?;
        let l: usize = row[1].parse().map_err(|_| bad(i, format!("bad layer {:?}", row[1])))?;
        let c: usize = row[2].parse().map_err(|_| bad(i, format!("bad channel {:?}", row[2])))?;
        let s: f64 = row[3].parse().map_err(|_| bad(i, format!("bad score {:?}", row[3])))?;
        if *metric.get_or_insert(m) != m || *layer.get_or_insert(l) != l || c != i {
            return Err(bad(i, "rows must share metric and layer and list channels in order".into()));
        }
        scores.push(s);
    }
    Ok(ChannelScoreTable {
        metric: metric.ok_or_else(|| bad(0, "no rows".into()))?,
        layer: layer.unwrap_or(0),
        scores,
        batches: 0,
        seed: 0,
    })
}

impl CsvReport for TrainHistory {
    fn header(&self) -> Vec<&'static str> {
        vec!["epoch", "lr", "train_loss", "train_acc", "eval_acc"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.epochs
            .iter()
            .map(|r| {
                vec![
                    r.epoch.to_string(),
                    real(r.lr),
                    real(r.train_loss),
                    real(r.train_acc),
                    r.eval_acc.map(real).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

impl CsvReport for RoutingTrace {
    fn header(&self) -> Vec<&'static str> {
        vec!["sample", "confidence", "route", "prediction", "correct"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i.to_string(),
                    real(r.confidence),
                    r.route.name().into(),
                    r.prediction.to_string(),
                    (r.correct as u8).to_string(),
                ]
            })
            .collect()
    }
}

fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                real(r.tau),
                real(r.accuracy),
                real(r.routed_fraction),
                real(r.cost_cascade),
                real(r.cost_exclusive),
            ]
        })
        .collect()
}

const SWEEP_HEADER: [&str; 5] = ["tau", "accuracy", "routed_fraction", "cost_cascade", "cost_exclusive"];

impl CsvReport for SweepResult {
    fn header(&self) -> Vec<&'static str> {
        SWEEP_HEADER.to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        sweep_rows(&self.rows)
    }
}

/// Pareto-optimal sweep rows, same columns as the sweep itself.
pub struct ParetoRows<'a>(pub &'a [SweepRow]);

impl CsvReport for ParetoRows<'_> {
    fn header(&self) -> Vec<&'static str> {
        SWEEP_HEADER.to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        sweep_rows(self.0)
    }
}

impl CsvReport for StabilityReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["metric", "k", "trial_a", "trial_b", "jaccard"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.pairs
            .iter()
            .map(|&(a, b, j)| {
                vec![self.metric.name().into(), self.k.to_string(), a.to_string(), b.to_string(), real(j)]
            })
            .collect()
    }
}

impl CsvReport for OrthogonalityReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["channel", "scoreA_norm", "scoreB_norm"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.normalized
            .iter()
            .enumerate()
            .map(|(c, &(a, b))| vec![c.to_string(), real(a), real(b)])
            .collect()
    }
}

fn ratio_cell(r: Option<f64>) -> String {
    r.map(real).unwrap_or_else(|| "undefined".into())
}

impl CsvReport for ProxyFidelityReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["proxy", "full", "pruned", "ratio"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![
            vec!["l1".into(), real(self.l1_full), real(self.l1_pruned), ratio_cell(self.l1_ratio())],
            vec!["agf".into(), real(self.agf_full), real(self.agf_pruned), ratio_cell(self.agf_ratio())],
        ]
    }
}

impl CsvReport for EntropyBucketReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["bin", "entropy_lo", "entropy_hi", "pruned", "full"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..self.bins())
            .map(|b| {
                let (lo, hi) = self.bin_edges(b);
                vec![
                    b.to_string(),
                    real(lo),
                    real(hi),
                    self.pruned[b].to_string(),
                    self.full[b].to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::Route;

    #[test]
    fn score_table_round_trip_is_exact() {
        let t = ChannelScoreTable {
            metric: Metric::Agf,
            layer: 2,
            scores: vec![0.1, 1.0 / 3.0, 2.5e-17, 123456.789, 0.0],
            batches: 0,
            seed: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        emit_csv(&t, &p).unwrap();
        let first = fs::read(&p).unwrap();
        emit_csv(&t, &p).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
        let back = read_score_table(&p).unwrap();
        assert_eq!(back.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   t.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.metric, Metric::Agf);
        assert_eq!(back.layer, 2);
    }

    #[test]
    fn empty_report_is_header_only() {
        let t = RoutingTrace { tau: 0.5, rows: vec![] };
        assert_eq!(to_csv_string(&t), "sample,confidence,route,prediction,correct\n");
    }

    #[test]
    fn trace_rows() {
        let t = RoutingTrace {
            tau: 0.5,
            rows: vec![crate::router::RouteRow { confidence: 0.25, route: Route::Full, prediction: 3, correct: true }],
        };
        assert_eq!(to_csv_string(&t).lines().nth(1).unwrap(), "0,0.25,full,3,1");
    }
}
