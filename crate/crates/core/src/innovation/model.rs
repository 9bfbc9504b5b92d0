//! Analytic innovation extractor for Gaussian-AR streams.
//!
//! `encode` whitens with the one-step AR predictor and maps standardized
//! residuals through the normal CDF; `decode` runs the recursion backwards.

use std::borrow::Cow;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::compression::subband::lowpass_taps;
use crate::error::{Error, Result};
use crate::innovation::ar::{autocovariance, burg, levinson_durbin, step_down, ArFit};
use crate::special::{norm_cdf, norm_ppf};
use crate::waveform::WaveformSeries;

pub const MODEL_VERSION: u32 = 1;
/// Innovations exactly at 0 or 1 are pulled this far inside before inversion.
pub const EPS_CLIP: f64 = 1e-12;

static CLIP_WARNINGS: AtomicU64 = AtomicU64::new(0);

/// Number of innovations clamped away from {0, 1} by `decode` in this process.
pub fn clip_warning_count() -> u64 {
    CLIP_WARNINGS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationMode {
    Uniform,
    Gaussian,
}

/// Innovations `values[i]` belong to input sample `warmup + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationSequence {
    pub values: Vec<f64>,
    pub mode: InnovationMode,
    pub warmup: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArEstimator {
    /// Sample autocovariances then Levinson-Durbin.
    #[default]
    YuleWalker,
    Burg,
}

/// Causal demodulator for the fundamental: `|2 h * (x e^{-j w t})|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDemod {
    pub fundamental_freq: f64,
    pub sample_rate: f64,
    /// Low-pass cutoff in Hz.
    pub cutoff: f64,
    pub taps: usize,
}

impl EnvelopeDemod {
    pub fn new(fundamental_freq: f64, sample_rate: f64) -> Self {
        let cycle = (sample_rate / fundamental_freq).round() as usize;
        Self {
            fundamental_freq,
            sample_rate,
            cutoff: fundamental_freq / 2.0,
            taps: (4 * cycle + 1).max(3),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fundamental_freq > 0.0
            && self.sample_rate > 2.0 * self.fundamental_freq
            && self.cutoff > 0.0
            && self.cutoff < self.sample_rate / 2.0
            && self.taps >= 1)
        {
            return Err(Error::Config(format!("invalid envelope demodulator {self:?}")));
        }
        Ok(())
    }

    /// Envelope of every sample; the first `taps - 1` outputs see a partial window.
    pub fn envelope(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let h = lowpass_taps(self.cutoff, self.sample_rate, self.taps)?;
        let w = TAU * self.fundamental_freq / self.sample_rate;
        let (re, im): (Vec<f64>, Vec<f64>) = x
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let (s, c) = (w * t as f64).sin_cos();
                (v * c, -v * s)
            })
            .unzip();
        Ok((0..x.len())
            .map(|t| {
                let (mut a, mut b) = (0.0, 0.0);
                for (j, hj) in h.iter().enumerate().take(t + 1) {
                    a += hj * re[t - j];
                    b += hj * im[t - j];
                }
                2.0 * a.hypot(b)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArInnovationModel {
    #[serde(default = "default_version")]
    pub version: u32,
    pub order: usize,
    pub ar_coeffs: Vec<f64>,
    pub innovation_std: f64,
    pub mean: f64,
    pub envelope_mode: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demod: Option<EnvelopeDemod>,
}

fn default_version() -> u32 {
    MODEL_VERSION
}

/// Fits an AR(p) innovation model with the Yule-Walker estimator.
///
/// With `envelope` set, the model whitens the demodulated fundamental
/// envelope instead of the raw samples.
pub fn estimate_ar_model(
    train: &WaveformSeries,
    order: usize,
    envelope: Option<EnvelopeDemod>,
) -> Result<ArInnovationModel> {
    estimate_ar_model_with(train, order, envelope, ArEstimator::YuleWalker)
}

pub fn estimate_ar_model_with(
    train: &WaveformSeries,
    order: usize,
    envelope: Option<EnvelopeDemod>,
    estimator: ArEstimator,
) -> Result<ArInnovationModel> {
    let mut skip = 0;
    let signal = match &envelope {
        Some(d) => {
            skip = d.taps.saturating_sub(1);
            d.envelope(train.samples())?
        }
        None => train.samples().to_vec(),
    };
    let data = signal.get(skip..).unwrap_or(&[]);
    if data.len() < 10 * order.max(1) {
        return Err(Error::Argument(format!(
            "{} training samples is fewer than 10 x order {order}",
            data.len()
        )));
    }
    let fit: ArFit = match estimator {
        ArEstimator::YuleWalker => levinson_durbin(&autocovariance(data, order))?,
        ArEstimator::Burg => burg(data, order)?,
    };
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let model = ArInnovationModel {
        version: MODEL_VERSION,
        order,
        ar_coeffs: fit.coeffs,
        innovation_std: fit.error_variance.sqrt(),
        mean,
        envelope_mode: envelope.is_some(),
        demod: envelope,
    };
    model.validate()?;
    Ok(model)
}

impl ArInnovationModel {
    pub fn validate(&self) -> Result<()> {
        if self.ar_coeffs.len() != self.order {
            return Err(Error::Config(format!(
                "order {} but {} coefficients",
                self.order,
                self.ar_coeffs.len()
            )));
        }
        if !(self.innovation_std > 0.0 && self.innovation_std.is_finite()) {
            return Err(Error::Degenerate(format!(
                "innovation std {} is not positive",
                self.innovation_std
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::Config("model mean is not finite".into()));
        }
        if self.envelope_mode != self.demod.is_some() {
            return Err(Error::Config(
                "envelope_mode requires demodulator settings (and only then)".into(),
            ));
        }
        step_down(&self.ar_coeffs).map_err(|e| Error::Config(format!("unstable model: {e}")))?;
        Ok(())
    }

    /// Samples of input consumed before the first innovation is produced.
    pub fn warmup(&self) -> usize {
        self.order + self.demod.as_ref().map_or(0, |d| d.taps.saturating_sub(1))
    }

    /// The stream the AR law applies to: the raw samples or their envelope.
    pub fn observed(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.demod {
            Some(d) => d.envelope(x),
            None => Ok(x.to_vec()),
        }
    }

    fn prediction(&self, y: &[f64], t: usize) -> f64 {
        let mut acc = self.mean;
        for (i, a) in self.ar_coeffs.iter().enumerate() {
            acc += a * (y[t - 1 - i] - self.mean);
        }
        acc
    }

    /// Standardized residuals `e_t / sigma` for every post-warm-up sample.
    pub fn encode_gaussian(&self, x: &WaveformSeries) -> Result<InnovationSequence> {
        self.validate()?;
        let warmup = self.warmup();
        if x.len() <= warmup {
            return Err(Error::Argument(format!(
                "series of {} samples does not exceed warm-up {warmup}",
                x.len()
            )));
        }
        let y = self.observed(x.samples())?;
        let values = (warmup..y.len())
            .map(|t| (y[t] - self.prediction(&y, t)) / self.innovation_std)
            .collect();
        Ok(InnovationSequence {
            values,
            mode: InnovationMode::Gaussian,
            warmup,
            sample_rate: x.sample_rate(),
        })
    }

    /// Probability integral transform of the standardized residuals.
    pub fn encode(&self, x: &WaveformSeries) -> Result<InnovationSequence> {
        let mut seq = self.encode_gaussian(x)?;
        for v in &mut seq.values {
            *v = norm_cdf(*v);
        }
        seq.mode = InnovationMode::Uniform;
        Ok(seq)
    }

    /// Inverts `encode`. `warmup` supplies the first `order` values of the
    /// whitened stream; the output is those values followed by the decoded
    /// samples. In envelope mode the result is the envelope stream.
    pub fn decode(&self, v: &InnovationSequence, warmup: &[f64]) -> Result<WaveformSeries> {
        self.validate()?;
        if v.mode != InnovationMode::Uniform {
            return Err(Error::Argument("decode expects uniform-mode innovations".into()));
        }
        if warmup.len() != self.order {
            return Err(Error::Argument(format!(
                "warm-up of {} values, model order {}",
                warmup.len(),
                self.order
            )));
        }
        let mut y = Vec::with_capacity(warmup.len() + v.values.len());
        y.extend_from_slice(warmup);
        for &u in &v.values {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Argument(format!("innovation {u} outside [0, 1]")));
            }
            let clipped = u.clamp(EPS_CLIP, 1.0 - EPS_CLIP);
            if clipped != u {
                CLIP_WARNINGS.fetch_add(1, Ordering::Relaxed);
            }
            let t = y.len();
            let next = self.prediction(&y, t) + self.innovation_std * norm_ppf(clipped);
            y.push(next);
        }
        WaveformSeries::new(y, v.sample_rate, 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Config(format!("unsupported model version {}", m.version)));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Online encoder that emits one innovation per pushed sample once warm.
    pub fn streaming(&self) -> Result<StreamingEncoder<'_>> {
        StreamingEncoder::new(Cow::Borrowed(self))
    }

    /// As `streaming`, owning the model.
    pub fn into_streaming(self) -> Result<StreamingEncoder<'static>> {
        StreamingEncoder::new(Cow::Owned(self))
    }
}

impl<'a> StreamingEncoder<'a> {
    fn new(model: Cow<'a, ArInnovationModel>) -> Result<Self> {
        model.validate()?;
        if model.envelope_mode {
            return Err(Error::Config(
                "streaming encoder supports raw-sample models only".into(),
            ));
        }
        let order = model.order;
        Ok(StreamingEncoder { model, history: vec![0.0; order], seen: 0 })
    }
}

/// Causal sample-by-sample encoder over a ring of the last `order` centred samples.
pub struct StreamingEncoder<'a> {
    model: Cow<'a, ArInnovationModel>,
    history: Vec<f64>,
    seen: usize,
}

impl StreamingEncoder<'_> {
    pub fn model(&self) -> &ArInnovationModel {
        &self.model
    }

    pub fn push(&mut self, x: f64) -> Option<f64> {
        let p = self.model.order;
        let centred = x - self.model.mean;
        let out = if self.seen >= p {
            let mut pred = 0.0;
            for (i, a) in self.model.ar_coeffs.iter().enumerate() {
                // history[(seen - 1 - i) % p] holds x[seen - 1 - i].
                pred += a * self.history[(self.seen - 1 - i) % p];
            }
            Some(norm_cdf((centred - pred) / self.model.innovation_std))
        } else {
            None
        };
        if p > 0 {
            self.history[self.seen % p] = centred;
        }
        self.seen += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::sdg::{sample_sdg_trajectory, SdgProcess};

    fn ar_series(coeffs: &[f64], n: usize, seed: u64) -> WaveformSeries {
        let p = SdgProcess::ar_gaussian(coeffs.to_vec(), 1.0, 0.0);
        WaveformSeries::new(sample_sdg_trajectory(&p, n, seed).unwrap(), 1000.0, 0.0).unwrap()
    }

    #[test]
    fn recovers_ar1() {
        let m = estimate_ar_model(&ar_series(&[0.5], 100_000, 4), 1, None).unwrap();
        assert!((m.ar_coeffs[0] - 0.5).abs() < 0.02);
        assert!((m.innovation_std - 1.0).abs() < 0.02);
    }

    #[test]
    fn white_noise_has_no_structure() {
        let m = estimate_ar_model(&ar_series(&[], 100_000, 5), 2, None).unwrap();
        assert!(m.ar_coeffs.iter().all(|a| a.abs() < 0.05));
    }

    #[test]
    fn constant_series_degenerate() {
        let x = WaveformSeries::new(vec![2.0; 100], 1.0, 0.0).unwrap();
        assert!(matches!(estimate_ar_model(&x, 2, None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_residual_maps_to_half() {
        let m = ArInnovationModel {
            version: 1,
            order: 1,
            ar_coeffs: vec![0.5],
            innovation_std: 1.0,
            mean: 0.0,
            envelope_mode: false,
            demod: None,
        };
        let x = WaveformSeries::new(vec![8.0, 4.0, 2.0, 1.0], 1.0, 0.0).unwrap();
        let v = m.encode(&x).unwrap();
        assert_eq!(v.values, vec![0.5; 3]);
        assert_eq!(m.encode_gaussian(&x).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn decode_inverts_encode() {
        let x = ar_series(&[0.6, -0.2], 5000, 6);
        let m = estimate_ar_model(&x, 2, None).unwrap();
        let v = m.encode(&x).unwrap();
        let back = m.decode(&v, &x.samples()[..2]).unwrap();
        for (a, b) in back.samples().iter().zip(x.samples()).skip(2) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn constant_decode_at_mean() {
        let m = ArInnovationModel {
            version: 1,
            order: 2,
            ar_coeffs: vec![0.3, 0.2],
            innovation_std: 2.0,
            mean: 7.0,
            envelope_mode: false,
            demod: None,
        };
        let v = InnovationSequence {
            values: vec![0.5; 20],
            mode: InnovationMode::Uniform,
            warmup: 2,
            sample_rate: 1.0,
        };
        let y = m.decode(&v, &[7.0, 7.0]).unwrap();
        assert!(y.samples().iter().all(|s| (*s - 7.0).abs() < 1e-12));
    }

    #[test]
    fn decode_clips_extremes() {
        let m = ArInnovationModel {
            version: 1,
            order: 0,
            ar_coeffs: vec![],
            innovation_std: 1.0,
            mean: 0.0,
            envelope_mode: false,
            demod: None,
        };
        let before = clip_warning_count();
        let v = InnovationSequence {
            values: vec![0.0, 1.0],
            mode: InnovationMode::Uniform,
            warmup: 0,
            sample_rate: 1.0,
        };
        let y = m.decode(&v, &[]).unwrap();
        assert!(y.samples().iter().all(|s| s.is_finite()));
        assert!(clip_warning_count() >= before + 2);
    }

    #[test]
    fn streaming_matches_batch() {
        let x = ar_series(&[0.4, 0.3, -0.1], 500, 7);
        let m = estimate_ar_model(&x, 3, None).unwrap();
        let batch = m.encode(&x).unwrap().values;
        let mut enc = m.streaming().unwrap();
        let online: Vec<f64> = x.samples().iter().filter_map(|s| enc.push(*s)).collect();
        assert_eq!(online.len(), batch.len());
        for (a, b) in online.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_and_fields() {
        let m = estimate_ar_model(&ar_series(&[0.5], 2000, 8), 2, None).unwrap();
        let text = m.to_json().unwrap();
        for key in ["order", "ar_coeffs", "innovation_std", "mean", "envelope_mode"] {
            assert!(text.contains(&format!("\"{key}\"")));
        }
        assert_eq!(ArInnovationModel::from_json(&text).unwrap(), m);
    }

    #[test]
    fn envelope_of_sinusoid() {
        let fs = 6000.0;
        let x: Vec<f64> = (0..6000)
            .map(|t| 40.0 * (TAU * 60.0 * t as f64 / fs + 0.3).sin())
            .collect();
        let env = EnvelopeDemod::new(60.0, fs).envelope(&x).unwrap();
        for e in &env[400..] {
            assert!((e - 40.0).abs() < 0.4, "{e}");
        }
    }
}
