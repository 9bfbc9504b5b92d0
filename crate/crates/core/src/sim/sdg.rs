//! Stochastic distributed-generation (SDG) current trajectories.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{block_bootstrap, read_waveform_csv};
use crate::innovation::ar::{is_stable, step_down, stationary_autocovariance};
use crate::rng::rng_from;
use crate::waveform::WaveformSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdgKind {
    ArGaussian,
    Bootstrap,
}

/// Where a bootstrap source comes from when the process is read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCsv {
    pub path: PathBuf,
    #[serde(default = "default_time_col")]
    pub time_col: String,
    #[serde(default = "default_value_col")]
    pub value_col: String,
}

fn default_time_col() -> String {
    "time_s".into()
}

fn default_value_col() -> String {
    "current_a".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdgProcess {
    pub kind: SdgKind,
    #[serde(default)]
    pub ar_coeffs: Vec<f64>,
    #[serde(default)]
    pub noise_std: f64,
    /// Mean current (amperes) around which the Gaussian AR path fluctuates.
    #[serde(default)]
    pub mean_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_csv: Option<BootstrapCsv>,
    #[serde(skip)]
    pub bootstrap_source: Option<Arc<WaveformSeries>>,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
}

fn default_block_len() -> usize {
    1
}

impl PartialEq for SdgProcess {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.ar_coeffs == other.ar_coeffs
            && self.noise_std == other.noise_std
            && self.mean_power == other.mean_power
            && self.bootstrap_csv == other.bootstrap_csv
            && self.block_len == other.block_len
            && self.bootstrap_source.as_deref() == other.bootstrap_source.as_deref()
    }
}

impl SdgProcess {
    pub fn ar_gaussian(ar_coeffs: Vec<f64>, noise_std: f64, mean_power: f64) -> Self {
        Self {
            kind: SdgKind::ArGaussian,
            ar_coeffs,
            noise_std,
            mean_power,
            bootstrap_csv: None,
            bootstrap_source: None,
            block_len: 1,
        }
    }

    pub fn bootstrap(source: WaveformSeries, block_len: usize) -> Self {
        Self {
            kind: SdgKind::Bootstrap,
            ar_coeffs: Vec::new(),
            noise_std: 0.0,
            mean_power: 0.0,
            bootstrap_csv: None,
            bootstrap_source: Some(Arc::new(source)),
            block_len,
        }
    }

    /// AR(1) process whose correlation time is `corr_time` seconds at `sample_rate`
    /// and whose stationary standard deviation is `std`.
    pub fn slow_ar1(mean_power: f64, std: f64, corr_time: f64, sample_rate: f64) -> Self {
        let a = (-1.0 / (corr_time * sample_rate)).exp();
        let noise_std = std * (1.0 - a * a).sqrt();
        Self::ar_gaussian(vec![a], noise_std, mean_power)
    }

    /// Loads the bootstrap source named in the config, if any and not yet loaded.
    pub fn resolve(&mut self, base_dir: Option<&std::path::Path>) -> Result<()> {
        if self.kind == SdgKind::Bootstrap && self.bootstrap_source.is_none() {
            if let Some(csv) = &self.bootstrap_csv {
                let path = match base_dir {
                    Some(dir) if csv.path.is_relative() => dir.join(&csv.path),
                    _ => csv.path.clone(),
                };
                let ds = read_waveform_csv(&path, &csv.time_col, &csv.value_col)?;
                self.bootstrap_source = Some(Arc::new(ds.series));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!(
                "SDG noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if self.block_len == 0 {
            return Err(Error::Config("SDG block_len must be positive".into()));
        }
        match self.kind {
            SdgKind::ArGaussian => {
                if !is_stable(&self.ar_coeffs) {
                    return Err(Error::Config(
                        "SDG AR polynomial is not stable (reflection coefficient outside (-1, 1))"
                            .into(),
                    ));
                }
            }
            SdgKind::Bootstrap => match &self.bootstrap_source {
                None => {
                    return Err(Error::Config(
                        "bootstrap SDG process requires a loaded source series".into(),
                    ))
                }
                Some(src) if src.len() < self.block_len => {
                    return Err(Error::Config(format!(
                        "bootstrap source of {} samples is shorter than block_len {}",
                        src.len(),
                        self.block_len
                    )))
                }
                Some(_) => {}
            },
        }
        Ok(())
    }
}

/// Draws `n` samples of the SDG current contribution.
///
/// The Gaussian AR path starts from its exact stationary law: the first `p`
/// values are drawn sequentially from the intermediate-order predictors, so no
/// transient needs to be discarded.
pub fn sample_sdg_trajectory(process: &SdgProcess, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Argument("trajectory length must be positive".into()));
    }
    process.validate()?;
    match process.kind {
        SdgKind::Bootstrap => {
            let src = process
                .bootstrap_source
                .as_ref()
                .ok_or_else(|| Error::Config("bootstrap source missing".into()))?;
            block_bootstrap(src, process.block_len, n, seed)
        }
        SdgKind::ArGaussian => {
            let mut rng = rng_from(seed);
            let a = &process.ar_coeffs;
            let p = a.len();
            let var = process.noise_std * process.noise_std;
            let mut dev = Vec::with_capacity(n);
            if p > 0 && var > 0.0 {
                let (reflection, predictors) = step_down(a)?;
                let gamma = stationary_autocovariance(a, var)?;
                let mut err = gamma[0];
                for m in 0..p.min(n) {
                    let pred = &predictors[m];
                    let mean: f64 = pred.iter().enumerate().map(|(i, c)| c * dev[m - 1 - i]).sum();
                    let z: f64 = rng.sample(StandardNormal);
                    dev.push(mean + err.sqrt() * z);
                    err *= 1.0 - reflection[m] * reflection[m];
                }
            }
            while dev.len() < n {
                let t = dev.len();
                let mut mean = 0.0;
                for (i, c) in a.iter().enumerate() {
                    if let Some(prev) = t.checked_sub(i + 1) {
                        mean += c * dev[prev];
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                dev.push(mean + process.noise_std * z);
            }
            for v in &mut dev {
                *v += process.mean_power;
            }
            Ok(dev)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn white_noise_variance() {
        let p = SdgProcess::ar_gaussian(vec![], 1.0, 0.0);
        let x = sample_sdg_trajectory(&p, 100_000, 1).unwrap();
        assert!((variance(&x) - 1.0).abs() < 0.02);
    }

    #[test]
    fn ar1_variance() {
        let p = SdgProcess::ar_gaussian(vec![0.5], 1.0, 0.0);
        let x = sample_sdg_trajectory(&p, 100_000, 2).unwrap();
        let expected = 1.0 / (1.0 - 0.25);
        assert!((variance(&x) / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn first_sample_is_stationary() {
        // Across seeds the first draw of a persistent AR(1) has the stationary variance.
        let p = SdgProcess::ar_gaussian(vec![0.99], 1.0, 0.0);
        let firsts: Vec<f64> = (0..4000)
            .map(|s| sample_sdg_trajectory(&p, 1, s).unwrap()[0])
            .collect();
        let expected = 1.0 / (1.0 - 0.99 * 0.99);
        assert!((variance(&firsts) / expected - 1.0).abs() < 0.08);
    }

    #[test]
    fn bootstrap_without_source_is_config_error() {
        let mut p = SdgProcess::bootstrap(WaveformSeries::new(vec![1.0], 1.0, 0.0).unwrap(), 1);
        p.bootstrap_source = None;
        assert!(matches!(sample_sdg_trajectory(&p, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn bootstrap_full_block_verbatim() {
        let src = WaveformSeries::new(vec![1.0, 2.0, 3.0, 4.0], 1.0, 0.0).unwrap();
        let p = SdgProcess::bootstrap(src, 4);
        assert_eq!(
            sample_sdg_trajectory(&p, 8, 9).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn unstable_ar_rejected() {
        let p = SdgProcess::ar_gaussian(vec![1.2], 1.0, 0.0);
        assert!(matches!(sample_sdg_trajectory(&p, 3, 0), Err(Error::Config(_))));
    }
}
