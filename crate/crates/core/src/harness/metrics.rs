//! Outcome tallies and the report files written after an experiment.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::experiment::{Method, RunArtifacts};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    fn rate(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn tpr(&self) -> f64 {
        Self::rate(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        Self::rate(self.fp, self.fp + self.tn)
    }
}

/// Counts of trip delays in right-closed bins `(edges[i], edges[i + 1]]`;
/// the first bin also holds zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl DelayHistogram {
    /// ISFD look times at 50 kHz, then a coarse grid to the window end.
    pub fn for_window(window: f64) -> Self {
        let mut edges = vec![0.0, 0.0017, 0.0034, 0.0068, 0.0136];
        for e in [0.05, 0.1, 0.2, 0.5] {
            if e < window {
                edges.push(e);
            }
        }
        if window > *edges.last().unwrap() {
            edges.push(window);
        }
        let counts = vec![0; edges.len() - 1];
        Self { edges, counts }
    }

    pub fn add(&mut self, delay: f64) {
        let bins = self.counts.len();
        let i = self.edges[1..]
            .iter()
            .position(|e| delay <= *e)
            .unwrap_or(bins - 1);
        self.counts[i] += 1;
    }

    /// Upper edge of the fullest bin.
    pub fn modal_upper_edge(&self) -> Option<f64> {
        let (i, c) = self.counts.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))?;
        (*c > 0).then(|| self.edges[i + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub case: String,
    pub relay: String,
    pub role: String,
    pub method: Method,
    /// Trip rate under the fault condition. For a sympathetic relay this is
    /// the rate of unwanted trips.
    pub tpr: f64,
    pub fpr: f64,
    pub mean_delay_s: Option<f64>,
    pub counts: Counts,
    pub delay_histogram: DelayHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub relay: String,
    pub method: Method,
    /// Pickup current (conventional) or alpha (AOCR).
    pub parameter: f64,
    pub achieved_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub master_seed: u64,
    pub n_runs: usize,
    pub completed_runs: usize,
    pub aborted_runs: usize,
    pub target_fpr: f64,
    pub isfd_threshold: f64,
    pub calibration: Vec<CalibrationEntry>,
    pub rows: Vec<MethodMetrics>,
}

impl MetricsReport {
    pub fn row(&self, case: &str, relay: &str, method: Method) -> Option<&MethodMetrics> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.relay == relay && r.method == method)
    }
}

pub const CSV_COLUMNS: [&str; 11] = [
    "case", "relay", "role", "method", "tpr", "fpr", "mean_delay_s", "tp", "fp", "tn", "fn",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `metrics.json` and `metrics.csv` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("metrics.json");
    let mut out = create(&json_path)?;
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n").map_err(|e| Error::io(&json_path, e))?;
    out.flush().map_err(|e| Error::io(&json_path, e))?;

    let csv_path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.case.clone(),
            r.relay.clone(),
            r.role.clone(),
            r.method.to_string(),
            format!("{:?}", r.tpr),
            format!("{:?}", r.fpr),
            r.mean_delay_s.map(|d| format!("{d:?}")).unwrap_or_default(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.tn.to_string(),
            r.counts.fn_.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Writes `innovation_hist_<relay>.csv` and `stats_scatter_<relay>_<method>.csv`.
/// Both carry a `condition` column: `no_fault` or the fault case name.
pub fn emit_plotdata(artifacts: &RunArtifacts, methods: &[Method], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bins = artifacts.histogram_bins;
    for (i, relay) in artifacts.relays.iter().enumerate() {
        let conditions = artifacts.conditions(i);

        let path = dir.join(format!("innovation_hist_{relay}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["condition", "bin_left", "bin_right", "count"])?;
        let mut names: Vec<&str> = vec!["no_fault"];
        names.extend(artifacts.cases.iter().map(String::as_str));
        for name in names {
            let mut total = vec![0u64; bins];
            let mut seen = false;
            for (_, cond, rec) in &conditions {
                if cond == name {
                    seen = true;
                    for (t, c) in total.iter_mut().zip(&rec.histogram) {
                        *t += c;
                    }
                }
            }
            if !seen {
                continue;
            }
            for (b, c) in total.iter().enumerate() {
                w.write_record([
                    name.to_string(),
                    format!("{:?}", b as f64 / bins as f64),
                    format!("{:?}", (b + 1) as f64 / bins as f64),
                    c.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        for &m in methods {
            let path = dir.join(format!("stats_scatter_{relay}_{m}.csv"));
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["run", "condition", "statistic", "threshold"])?;
            for (run, cond, rec) in &conditions {
                let (_, _, stat, thr) = artifacts.outcome(rec, i, m)?;
                w.write_record([run.to_string(), cond.clone(), format!("{stat:?}"), format!("{thr:?}")])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
