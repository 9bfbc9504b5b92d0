//! Paired Monte-Carlo runs over a scenario suite.
//!
//! Every run draws one no-fault feeder trace per relay. Each fault case then
//! adds its post-onset correction to copies of those traces, so the fault and
//! no-fault conditions of a run share everything before onset.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    calibrate, linspace, pickup_grid, AocrConfig, BlockProfile, Calibrated, InverseTimeCurve,
    ObservationWindow, OvercurrentConfig, RelayConfig, DEFAULT_TIME_DIAL,
};
use crate::error::{Error, Result};
use crate::innovation::model::{estimate_ar_model_with, ArEstimator, ArInnovationModel};
use crate::isfd::{isfd_detect, IsfdConfig, IsfdOutcome};
use crate::nst::Decision;
use crate::rng::{split_seed, stream_seed};
use crate::sim::scenario::{default_suite, FeederScenario, RelayRole, ScenarioSuite};
use crate::sim::simulate::{draw_sdg, render_no_fault, FaultShape};
use crate::waveform::WaveformSeries;

use super::metrics::{Counts, DelayHistogram, MethodMetrics, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Isfd,
    Conventional,
    Aocr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Isfd, Method::Conventional, Method::Aocr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Isfd => "isfd",
            Method::Conventional => "conventional",
            Method::Aocr => "aocr",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario suite file; the built-in feeder when absent.
    pub scenario: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub n_runs: usize,
    pub target_fpr: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub isfd: IsfdConfig,
    /// AR order of the per-relay whitening models.
    pub ar_order: usize,
    pub train_samples: usize,
    /// Seconds after onset in which a trip counts.
    pub window_seconds: f64,
    pub block_len: usize,
    pub time_dial: f64,
    pub aocr_beta: f64,
    pub aocr_avg_window: f64,
    pub grid_points: usize,
    pub histogram_bins: usize,
    /// Samples of history given to the whitening filter before onset.
    pub isfd_history: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            methods: Method::ALL.to_vec(),
            n_runs: 1000,
            target_fpr: 0.05,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            isfd: IsfdConfig::default(),
            ar_order: 32,
            train_samples: 10_000,
            window_seconds: 1.0,
            block_len: 833,
            time_dial: DEFAULT_TIME_DIAL,
            aocr_beta: 0.0,
            aocr_avg_window: 10.0,
            grid_points: 400,
            histogram_bins: 20,
            isfd_history: 256,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::Config(format!("target_fpr {} outside (0, 1)", self.target_fpr)));
        }
        if !(self.window_seconds > 0.0) || self.block_len < 2 || self.histogram_bins == 0 {
            return Err(Error::Config("window, block_len and histogram_bins must be positive".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        self.isfd.validate()
    }

    /// Parses a TOML config; a relative `scenario` path is taken relative to `base`.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        if let (Some(p), Some(b)) = (&cfg.scenario, base) {
            if p.is_relative() {
                cfg.scenario = Some(b.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn suite(&self) -> Result<ScenarioSuite> {
        match &self.scenario {
            Some(p) => ScenarioSuite::load(p),
            None => Ok(default_suite()),
        }
    }

    fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// Per-relay whitening models fitted on a dedicated no-fault trace.
pub fn train_relay_models(suite: &ScenarioSuite, cfg: &ExperimentConfig) -> Result<Vec<(String, ArInnovationModel)>> {
    let mut scn = suite.no_fault(stream_seed(cfg.master_seed, "train"));
    scn.duration = (cfg.train_samples as f64 + 1.0) / scn.sample_rate;
    let sdg = draw_sdg(&scn)?;
    scn.relays
        .iter()
        .map(|relay| {
            let trace = render_no_fault(&scn, relay, &sdg);
            let n = cfg.train_samples.min(trace.samples.len());
            let train = WaveformSeries::new(trace.samples[..n].to_vec(), scn.sample_rate, 0.0)?;
            let model = estimate_ar_model_with(&train, cfg.ar_order, None, ArEstimator::Burg)?;
            Ok((relay.name.clone(), model))
        })
        .collect()
}

/// One relay under one condition of one run.
#[derive(Debug, Clone)]
pub struct RelayRecord {
    pub profile: BlockProfile,
    pub isfd: Option<IsfdOutcome>,
    /// Innovation histogram over the full ISFD window after onset.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub no_fault: Vec<RelayRecord>,
    /// Per case, the affected relays (by index) and their faulted records.
    pub cases: Vec<Vec<(usize, RelayRecord)>>,
}

/// Everything needed to recompute the report and plot data.
pub struct RunArtifacts {
    pub relays: Vec<String>,
    pub cases: Vec<String>,
    pub roles: Vec<Vec<(usize, RelayRole)>>,
    pub records: Vec<RunRecord>,
    pub calibrated: Vec<(String, Method, Calibrated)>,
    pub isfd_threshold: f64,
    pub histogram_bins: usize,
    pub window: ObservationWindow,
}

pub struct Experiment {
    pub report: MetricsReport,
    pub artifacts: RunArtifacts,
}

struct Shared<'a> {
    suite: &'a ScenarioSuite,
    cfg: &'a ExperimentConfig,
    models: &'a [(String, ArInnovationModel)],
    onset: f64,
}

fn histogram(values: &[f64], bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for v in values {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

/// Innovations of `segment` from sample `start` on, `count` of them.
fn innovations(model: &ArInnovationModel, segment: &[f64], start: usize, count: usize) -> Result<Vec<f64>> {
    let mut enc = model.streaming()?;
    for &s in &segment[..start] {
        enc.push(s);
    }
    let v: Vec<f64> = segment[start..].iter().filter_map(|&s| enc.push(s)).take(count).collect();
    if v.len() < count {
        return Err(Error::Argument(format!(
            "{} innovations after onset, {count} required",
            v.len()
        )));
    }
    Ok(v)
}

/// Samples of history kept before onset for the whitening filter.
fn history(cfg: &ExperimentConfig, model: &ArInnovationModel) -> usize {
    cfg.isfd_history.max(model.warmup())
}

/// `segment` holds the history before onset followed by at least the
/// longest ISFD window.
fn record(sh: &Shared<'_>, model: &ArInnovationModel, segment: &[f64], onset: usize, profile: BlockProfile, fs: f64) -> Result<RelayRecord> {
    let n_max = *sh.cfg.isfd.schedule().last().expect("schedule is non-empty");
    let v = innovations(model, segment, onset, n_max)?;
    let isfd = if sh.cfg.wants(Method::Isfd) {
        Some(isfd_detect(v.iter().copied(), fs, &sh.cfg.isfd)?)
    } else {
        None
    };
    Ok(RelayRecord {
        profile,
        isfd,
        histogram: histogram(&v, sh.cfg.histogram_bins),
    })
}

fn profile_of(samples: &[f64], block_len: usize, fs: f64) -> Result<BlockProfile> {
    let w = WaveformSeries::new(samples.to_vec(), fs, 0.0)?;
    BlockProfile::from_waveform(&w, block_len)
}

fn simulate_run(sh: &Shared<'_>, run: usize) -> Result<RunRecord> {
    let seed = split_seed(sh.cfg.master_seed, run as u64);
    let base = sh.suite.no_fault(seed);
    let fs = base.sample_rate;
    let bl = sh.cfg.block_len;
    let sdg = draw_sdg(&base)?;
    let traces: Vec<_> = base.relays.iter().map(|r| render_no_fault(&base, r, &sdg)).collect();
    let onset_index = (sh.onset * fs).round() as usize;

    let n_max = *sh.cfg.isfd.schedule().last().expect("schedule is non-empty");
    let mut no_fault = Vec::with_capacity(traces.len());
    for (i, t) in traces.iter().enumerate() {
        let model = &sh.models[i].1;
        let lo = onset_index.saturating_sub(history(sh.cfg, model));
        let hi = (onset_index + n_max).min(t.samples.len());
        let profile = profile_of(&t.samples, bl, fs)?;
        no_fault.push(record(sh, model, &t.samples[lo..hi], onset_index - lo, profile, fs)?);
    }

    let mut cases = Vec::with_capacity(sh.suite.cases.len());
    for case in &sh.suite.cases {
        let scn: FeederScenario = sh.suite.scenario(&case.name, seed)?;
        let mut affected = Vec::new();
        for (i, relay) in scn.relays.iter().enumerate() {
            let Some(fault) = &relay.fault else { continue };
            let model = &sh.models[i].1;
            let shape = FaultShape::new(&scn, relay, fault, &sdg);
            let at = shape.onset_index();
            // Only blocks from the one containing onset change.
            let first_block = at / bl;
            let start = first_block * bl;
            let mut tail = traces[i].samples[start..].to_vec();
            shape.apply(&scn, &sdg, traces[i].phase, start, &mut tail);
            let mut maxima = no_fault[i].profile.maxima[..first_block].to_vec();
            maxima.extend(profile_of(&tail, bl, fs)?.maxima);
            let profile = BlockProfile { maxima, ..no_fault[i].profile.clone() };

            let lo = at.saturating_sub(history(sh.cfg, model));
            let hi = (at + n_max).min(traces[i].samples.len());
            let segment: Vec<f64> = (lo..hi)
                .map(|k| if k < start { traces[i].samples[k] } else { tail[k - start] })
                .collect();
            affected.push((i, record(sh, model, &segment, at - lo, profile, fs)?));
        }
        cases.push(affected);
    }
    Ok(RunRecord { run, no_fault, cases })
}

fn tally(
    nf: impl Iterator<Item = (Decision, Option<f64>)>,
    f: impl Iterator<Item = (Decision, Option<f64>)>,
    hist: &mut DelayHistogram,
) -> (Counts, f64, usize) {
    let mut c = Counts::default();
    for (d, _) in nf {
        match d {
            Decision::H1 => c.fp += 1,
            Decision::H0 => c.tn += 1,
        }
    }
    let (mut delay_sum, mut delays) = (0.0, 0usize);
    for (d, delay) in f {
        match d {
            Decision::H1 => {
                c.tp += 1;
                if let Some(s) = delay {
                    delay_sum += s;
                    delays += 1;
                    hist.add(s);
                }
            }
            Decision::H0 => c.fn_ += 1,
        }
    }
    (c, delay_sum, delays)
}

/// Decision and delay of a calibrated relay for one record.
pub fn relay_decision(cal: &Calibrated, rec: &RelayRecord, window: &ObservationWindow) -> Result<(Decision, Option<f64>, f64, f64)> {
    let o = cal.config.decide(&rec.profile, window)?;
    Ok((o.decision, o.delay_seconds, o.statistic, o.threshold))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let suite = cfg.suite()?;
    let onsets: Vec<f64> = suite.cases.iter().map(|c| c.onset).collect();
    let onset = match onsets.first() {
        Some(&o) if onsets.iter().all(|&x| x == o) => o,
        Some(_) => {
            return Err(Error::Config(
                "paired runs need every fault case to share one onset".into(),
            ))
        }
        None => return Err(Error::Config("scenario suite has no fault cases".into())),
    };
    let window = ObservationWindow { start: onset, length: cfg.window_seconds };
    let n_max = *cfg.isfd.schedule().last().expect("schedule is non-empty");
    let fs = suite.feeder.sample_rate;
    if ((onset + cfg.window_seconds) * fs).ceil() as usize > suite.no_fault(0).n_samples()
        || (onset * fs) as usize + n_max > suite.no_fault(0).n_samples()
    {
        return Err(Error::Config(format!(
            "observation window of {} s after onset {onset} s exceeds the {} s scenario",
            cfg.window_seconds, suite.feeder.duration
        )));
    }

    let models = train_relay_models(&suite, cfg)?;
    let shared = Shared { suite: &suite, cfg, models: &models, onset };
    let results: Vec<Result<RunRecord>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| simulate_run(&shared, r))
        .collect();
    let failed: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().map(ToString::to_string)).collect();
    if failed.len() * 100 > cfg.n_runs {
        return Err(Error::ExperimentAborted {
            failed: failed.len(),
            total: cfg.n_runs,
            first: failed[0].clone(),
        });
    }
    let records: Vec<RunRecord> = results.into_iter().filter_map(Result::ok).collect();

    let relays: Vec<String> = suite.feeder.relays.iter().map(|r| r.name.clone()).collect();
    let mut calibrated = Vec::new();
    for (i, base) in suite.feeder.relays.iter().enumerate() {
        let profiles: Vec<BlockProfile> = records.iter().map(|r| r.no_fault[i].profile.clone()).collect();
        if cfg.wants(Method::Conventional) {
            let template = RelayConfig::Conventional(OvercurrentConfig {
                pickup_current: 1.0,
                time_dial: cfg.time_dial,
                curve: InverseTimeCurve::default(),
                block_len: cfg.block_len,
            });
            let grid = pickup_grid(&profiles, &window, cfg.grid_points);
            calibrated.push((base.name.clone(), Method::Conventional, calibrate(&template, &profiles, &window, cfg.target_fpr, &grid)?));
        }
        if cfg.wants(Method::Aocr) {
            let i_fault_min = base.i_fault_min.unwrap_or(2.0 * base.base_envelope);
            let template = RelayConfig::Aocr(AocrConfig {
                alpha: 1.0,
                beta: cfg.aocr_beta,
                avg_window: cfg.aocr_avg_window,
                i_fault_min,
                time_dial: cfg.time_dial,
                curve: InverseTimeCurve::default(),
                block_len: cfg.block_len,
            });
            let grid = linspace(0.01, 3.0, cfg.grid_points);
            calibrated.push((base.name.clone(), Method::Aocr, calibrate(&template, &profiles, &window, cfg.target_fpr, &grid)?));
        }
    }

    let roles: Vec<Vec<(usize, RelayRole)>> = suite
        .cases
        .iter()
        .map(|c| {
            c.relays
                .iter()
                .filter(|cr| cr.role != RelayRole::Unaffected)
                .filter_map(|cr| relays.iter().position(|n| *n == cr.name).map(|i| (i, cr.role)))
                .collect()
        })
        .collect();

    let artifacts = RunArtifacts {
        relays,
        cases: suite.case_names(),
        roles,
        records,
        calibrated,
        isfd_threshold: cfg.isfd.threshold(),
        histogram_bins: cfg.histogram_bins,
        window,
    };
    let report = build_report(cfg, &artifacts, failed.len())?;
    Ok(Experiment { report, artifacts })
}

impl RunArtifacts {
    pub fn calibration(&self, relay: usize, method: Method) -> Option<&Calibrated> {
        self.calibrated
            .iter()
            .find(|(r, m, _)| *r == self.relays[relay] && *m == method)
            .map(|(_, _, c)| c)
    }

    fn case_record<'a>(&self, run: &'a RunRecord, case: usize, relay: usize) -> Option<&'a RelayRecord> {
        run.cases[case].iter().find(|(i, _)| *i == relay).map(|(_, r)| r)
    }

    /// `(decision, delay, statistic, threshold)` for one record.
    pub fn outcome(&self, rec: &RelayRecord, relay: usize, method: Method) -> Result<(Decision, Option<f64>, f64, f64)> {
        match method {
            Method::Isfd => {
                let o = rec
                    .isfd
                    .as_ref()
                    .ok_or_else(|| Error::Config("ISFD was not run".into()))?;
                let last = o.statistic_trace.last().map_or(0.0, |e| e.statistic);
                Ok((o.decision, o.delay_seconds, last, self.isfd_threshold))
            }
            m => {
                let cal = self
                    .calibration(relay, m)
                    .ok_or_else(|| Error::Config(format!("{m} was not calibrated")))?;
                relay_decision(cal, rec, &self.window)
            }
        }
    }

    /// Yields `(run, condition, record)` for the no-fault condition and every
    /// case that affects `relay`.
    pub fn conditions(&self, relay: usize) -> Vec<(usize, String, &RelayRecord)> {
        let mut out = Vec::new();
        for run in &self.records {
            out.push((run.run, "no_fault".to_string(), &run.no_fault[relay]));
            for (c, name) in self.cases.iter().enumerate() {
                if let Some(rec) = self.case_record(run, c, relay) {
                    out.push((run.run, name.clone(), rec));
                }
            }
        }
        out
    }
}

fn build_report(cfg: &ExperimentConfig, a: &RunArtifacts, aborted: usize) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    for (c, case) in a.cases.iter().enumerate() {
        for &(relay, role) in &a.roles[c] {
            for &m in &methods {
                let nf = a
                    .records
                    .iter()
                    .map(|r| a.outcome(&r.no_fault[relay], relay, m).map(|o| (o.0, o.1)))
                    .collect::<Result<Vec<_>>>()?;
                let f = a
                    .records
                    .iter()
                    .filter_map(|r| a.case_record(r, c, relay))
                    .map(|rec| a.outcome(rec, relay, m).map(|o| (o.0, o.1)))
                    .collect::<Result<Vec<_>>>()?;
                let mut hist = DelayHistogram::for_window(cfg.window_seconds);
                let (counts, delay_sum, n_delays) = tally(nf.into_iter(), f.into_iter(), &mut hist);
                rows.push(MethodMetrics {
                    case: case.clone(),
                    relay: a.relays[relay].clone(),
                    role: role.as_str().to_string(),
                    method: m,
                    tpr: counts.tpr(),
                    fpr: counts.fpr(),
                    mean_delay_s: (n_delays > 0).then(|| delay_sum / n_delays as f64),
                    counts,
                    delay_histogram: hist,
                });
            }
        }
    }
    Ok(MetricsReport {
        master_seed: cfg.master_seed,
        n_runs: cfg.n_runs,
        completed_runs: a.records.len(),
        aborted_runs: aborted,
        target_fpr: cfg.target_fpr,
        isfd_threshold: a.isfd_threshold,
        calibration: a
            .calibrated
            .iter()
            .map(|(r, m, c)| super::metrics::CalibrationEntry {
                relay: r.clone(),
                method: *m,
                parameter: c.config.parameter(),
                achieved_fpr: c.achieved_fpr,
            })
            .collect(),
        rows,
    })
}
