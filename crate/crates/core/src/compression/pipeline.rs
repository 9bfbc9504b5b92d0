//! End-to-end subband compression: per-component closed-loop predictive
//! quantization of the I/Q baseband streams, with rates from inverse
//! water-filling over the innovation variances.
//!
//! Blob layout: `b"CPW1" | u32 LE header length | JSON header | payloads`,
//! payloads in header component order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compression::quantize::{
    gaussian_quantizer_mse, levels_for_distortion, pack_indices, unpack_indices, Codebook,
};
use crate::compression::subband::{subband_decompose, subband_reconstruct, SubbandPlan, SubbandSignal};
use crate::compression::waterfill::{allocate_distortion, RateAllocation};
use crate::error::{Error, Result};
use crate::innovation::ar::burg;
use crate::innovation::model::{ArInnovationModel, MODEL_VERSION};
use crate::waveform::WaveformSeries;

pub const MAGIC: &[u8; 4] = b"CPW1";
pub const BLOB_VERSION: u32 = 1;

/// Largest quantizer MSE, relative to the residual spread, allowed for a
/// coded component.
const MAX_CODED_RATIO: f64 = 0.5;

/// AR models for the in-phase and quadrature parts of one subband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandModels {
    pub in_phase: ArInnovationModel,
    pub quadrature: ArInnovationModel,
}

fn component(band: &SubbandSignal, quadrature: bool) -> Vec<f64> {
    band.baseband
        .iter()
        .map(|c| if quadrature { c.im } else { c.re })
        .collect()
}

fn fit_component(y: &[f64], order: usize) -> Result<ArInnovationModel> {
    let fit = burg(y, order)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let m = ArInnovationModel {
        version: MODEL_VERSION,
        order,
        ar_coeffs: fit.coeffs,
        innovation_std: fit.error_variance.sqrt(),
        mean,
        envelope_mode: false,
        demod: None,
    };
    m.validate()?;
    Ok(m)
}

/// Fits Gaussian-mode AR models to every baseband component of anomaly-free data.
pub fn train_subband_models(
    train: &WaveformSeries,
    plan: &SubbandPlan,
    order: usize,
) -> Result<Vec<SubbandModels>> {
    let bands = subband_decompose(train, plan)?;
    // Drop the filter edges, where the zero padding shows.
    let edge = plan.filter_taps.div_ceil(plan.decimation);
    bands
        .iter()
        .map(|b| {
            let len = b.baseband.len();
            if len <= 2 * edge + 10 * order.max(1) {
                return Err(Error::Argument(format!(
                    "training series gives only {len} baseband samples per subband"
                )));
            }
            let inner = edge..len - edge;
            Ok(SubbandModels {
                in_phase: fit_component(&component(b, false)[inner.clone()], order)?,
                quadrature: fit_component(&component(b, true)[inner], order)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentHeader {
    pub band: usize,
    pub quadrature: bool,
    pub model: ArInnovationModel,
    /// First `order` samples, stored exactly.
    pub warmup: Vec<f64>,
    pub codebook: Codebook,
    pub count: usize,
    pub payload_bytes: usize,
    /// Set when the component is sent as this constant instead of coded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobHeader {
    pub version: u32,
    pub plan: SubbandPlan,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub t0: f64,
    pub d_target: f64,
    /// Interior MSE of an uncoded decompose/reconstruct round trip.
    pub truncation_floor: f64,
    /// Waveform MSE per unit component distortion.
    pub component_gain: f64,
    pub allocation: RateAllocation,
    pub components: Vec<ComponentHeader>,
    /// Per-block fault flags from local analytics, if supplied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_flags: Vec<bool>,
    /// Bands left out because every block was flagged normal.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suppressed_bands: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlob {
    pub header: BlobHeader,
    pub header_json: Vec<u8>,
    pub payloads: Vec<Vec<u8>>,
}

impl CompressedBlob {
    fn new(header: BlobHeader, payloads: Vec<Vec<u8>>) -> Result<Self> {
        let header_json = serde_json::to_vec(&header)?;
        Ok(Self { header, header_json, payloads })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.header_json.len() + self.payload_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.header_json);
        for p in &self.payloads {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Blob("missing CPW1 magic".into()));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let json = bytes
            .get(8..8 + len)
            .ok_or_else(|| Error::Blob("header length exceeds blob".into()))?;
        let header: BlobHeader = serde_json::from_slice(json)?;
        if header.version != BLOB_VERSION {
            return Err(Error::Blob(format!("unsupported blob version {}", header.version)));
        }
        let mut pos = 8 + len;
        let mut payloads = Vec::with_capacity(header.components.len());
        for c in &header.components {
            let p = bytes
                .get(pos..pos + c.payload_bytes)
                .ok_or_else(|| Error::Blob("payload truncated".into()))?;
            payloads.push(p.to_vec());
            pos += c.payload_bytes;
        }
        if pos != bytes.len() {
            return Err(Error::Blob(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self { header, header_json: json.to_vec(), payloads })
    }

    pub fn payload_len(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }
}

/// Mean squared difference over samples at least one filter length from either end.
pub fn interior_mse(a: &[f64], b: &[f64], plan: &SubbandPlan) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument("series lengths differ".into()));
    }
    let edge = plan.filter_taps;
    if a.len() <= 2 * edge {
        return Err(Error::Argument(format!(
            "series of {} samples has no interior beyond {edge}-sample edges",
            a.len()
        )));
    }
    let n = a.len() - 2 * edge;
    Ok(a[edge..a.len() - edge]
        .iter()
        .zip(&b[edge..b.len() - edge])
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n as f64)
}

/// Mean and variance of the open-loop prediction residual.
fn open_loop_residual(model: &ArInnovationModel, y: &[f64]) -> (f64, f64) {
    let p = model.order;
    if y.len() <= p {
        return (0.0, 0.0);
    }
    let r: Vec<f64> = (p..y.len()).map(|t| y[t] - prediction(model, &y[..t])).collect();
    mean_var(&r)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Closed-loop coding: predictions use reconstructed values, so the coding
/// error of each sample equals the quantization error of its residual.
fn dpcm(model: &ArInnovationModel, y: &[f64], book: &Codebook) -> (Vec<u32>, Vec<f64>) {
    let p = model.order.min(y.len());
    let mut rec = y[..p].to_vec();
    let mut idx = Vec::with_capacity(y.len() - p);
    for &v in &y[p..] {
        let pred = prediction(model, &rec);
        let i = book.index(v - pred);
        idx.push(i);
        rec.push(pred + book.value(i));
    }
    (idx, rec)
}

fn prediction(model: &ArInnovationModel, rec: &[f64]) -> f64 {
    let t = rec.len();
    let mut pred = model.mean;
    for (i, a) in model.ar_coeffs.iter().enumerate() {
        pred += a * (rec[t - 1 - i] - model.mean);
    }
    pred
}

/// Per-component statistics that drive the bit allocation.
struct StreamStats {
    suppressed: bool,
    /// Sample mean and variance of the component itself.
    mean: f64,
    var: f64,
    /// Open-loop prediction residual.
    residual_mean: f64,
    residual_var: f64,
    /// Sum of squared AR coefficients: gain of coding-error feedback.
    feedback: f64,
    count: usize,
}

impl StreamStats {
    fn new(model: &ArInnovationModel, y: &[f64], suppressed: bool) -> Self {
        let (mean, var) = mean_var(y);
        let (residual_mean, residual_var) = open_loop_residual(model, y);
        Self {
            suppressed,
            mean,
            var,
            residual_mean,
            residual_var,
            feedback: model.ar_coeffs.iter().map(|a| a * a).sum(),
            count: y.len().saturating_sub(model.order),
        }
    }

    /// Quantizer meeting distortion `d` in closed loop. A one-level quantizer
    /// leaves the loop free-running, so coded components always get
    /// informative levels.
    fn codebook(&self, d: f64) -> Result<Codebook> {
        let spread = (self.residual_var + self.feedback * d).max(f64::MIN_POSITIVE);
        let levels = levels_for_distortion((d / spread).min(MAX_CODED_RATIO))?;
        debug_assert!(gaussian_quantizer_mse(levels) * spread <= d * (1.0 + 1e-9));
        Ok(Codebook { mean: self.residual_mean, std: spread.sqrt(), levels })
    }
}

/// Splits the budget between components sent as their mean (held) and
/// components coded by DPCM, water-filling the remainder over the coded
/// residual variances. Components are held cheapest first; the split with
/// the fewest payload bits wins.
fn choose_allocation(stats: &[StreamStats], budget: f64) -> Result<(Vec<bool>, RateAllocation)> {
    let mut order: Vec<usize> = (0..stats.len()).filter(|&i| !stats[i].suppressed).collect();
    order.sort_by(|&a, &b| stats[a].var.total_cmp(&stats[b].var));
    let mut best: Option<(u64, Vec<bool>, RateAllocation)> = None;
    let mut held = vec![false; stats.len()];
    let mut spent = 0.0;
    for k in 0..=order.len() {
        if k > 0 {
            let i = order[k - 1];
            spent += stats[i].var;
            held[i] = true;
        }
        if spent > budget {
            break;
        }
        let variances: Vec<f64> = stats
            .iter()
            .zip(&held)
            .map(|(s, &h)| if s.suppressed || h { 0.0 } else { s.residual_var })
            .collect();
        let remainder = budget - spent;
        let allocation = if variances.iter().any(|v| *v > 0.0) && remainder > 0.0 {
            allocate_distortion(&variances, remainder)?
        } else if variances.iter().any(|v| *v > 0.0) {
            continue;
        } else {
            RateAllocation { distortions: variances.clone(), variances, water_level: 0.0, total_rate: 0.0 }
        };
        let mut bits = 0u64;
        let mut feasible = true;
        for (i, s) in stats.iter().enumerate() {
            if s.suppressed || held[i] {
                continue;
            }
            match s.codebook(allocation.distortions[i]) {
                Ok(book) => bits += u64::from(book.bits()) * s.count as u64,
                Err(_) => feasible = false,
            }
        }
        if feasible && best.as_ref().is_none_or(|b| bits < b.0) {
            best = Some((bits, held.clone(), allocation));
        }
    }
    best.map(|(_, h, a)| (h, a))
        .ok_or_else(|| Error::Config(format!("no allocation meets distortion budget {budget}")))
}

#[derive(Debug, Clone, Default)]
pub struct CompressOptions {
    pub state_flags: Vec<bool>,
    /// Drop harmonic bands (all but the fundamental) when no block is flagged.
    pub suppress_harmonics_when_normal: bool,
}

pub fn compress_pipeline(
    x: &WaveformSeries,
    plan: &SubbandPlan,
    d_target: f64,
    models: &[SubbandModels],
) -> Result<CompressedBlob> {
    compress_pipeline_with(x, plan, d_target, models, &CompressOptions::default())
}

pub fn compress_pipeline_with(
    x: &WaveformSeries,
    plan: &SubbandPlan,
    d_target: f64,
    models: &[SubbandModels],
    options: &CompressOptions,
) -> Result<CompressedBlob> {
    if !(d_target > 0.0) {
        return Err(Error::Argument(format!("target distortion {d_target} must be positive")));
    }
    if models.len() < plan.m {
        return Err(Error::Config(format!(
            "{} subband models for {} active subbands",
            models.len(),
            plan.m
        )));
    }
    let bands = subband_decompose(x, plan)?;
    let uncoded = subband_reconstruct(&bands, plan, x.len(), x.t0())?;
    let floor = interior_mse(x.samples(), uncoded.samples(), plan)?;
    if d_target <= floor {
        return Err(Error::Config(format!(
            "target distortion {d_target} is below the subband truncation floor {floor}"
        )));
    }
    let gain = plan.component_gain()?;
    let suppressed: Vec<usize> = if options.suppress_harmonics_when_normal
        && !options.state_flags.iter().any(|f| *f)
    {
        (2..=plan.m).collect()
    } else {
        Vec::new()
    };

    let mut streams = Vec::with_capacity(2 * plan.m);
    for (k, band) in bands.iter().enumerate() {
        for quadrature in [false, true] {
            let model = if quadrature { &models[k].quadrature } else { &models[k].in_phase };
            model.validate()?;
            if model.envelope_mode {
                return Err(Error::Config("subband models must whiten raw components".into()));
            }
            streams.push((k + 1, quadrature, model, component(band, quadrature)));
        }
    }
    let stats: Vec<StreamStats> = streams
        .iter()
        .map(|(k, _, m, y)| StreamStats::new(m, y, suppressed.contains(k)))
        .collect();
    let budget = (d_target - floor) / gain;
    let (held, allocation) = choose_allocation(&stats, budget)?;

    let mut components = Vec::with_capacity(streams.len());
    let mut payloads = Vec::with_capacity(streams.len());
    for (i, (band, quadrature, model, y)) in streams.into_iter().enumerate() {
        let st = &stats[i];
        let mut held_mean = None;
        let (warmup, book, indices) = if st.suppressed {
            (Vec::new(), Codebook { mean: 0.0, std: 0.0, levels: 1 }, Vec::new())
        } else if held[i] {
            held_mean = Some(st.mean);
            (Vec::new(), Codebook { mean: st.mean, std: 0.0, levels: 1 }, Vec::new())
        } else {
            let book = st.codebook(allocation.distortions[i])?;
            let (idx, _) = dpcm(model, &y, &book);
            (y[..model.order.min(y.len())].to_vec(), book, idx)
        };
        let payload = pack_indices(&indices, book.bits());
        components.push(ComponentHeader {
            band,
            quadrature,
            model: model.clone(),
            warmup,
            codebook: book,
            count: indices.len(),
            payload_bytes: payload.len(),
            held_mean,
        });
        payloads.push(payload);
    }

    CompressedBlob::new(
        BlobHeader {
            version: BLOB_VERSION,
            plan: plan.clone(),
            n_samples: x.len(),
            sample_rate: x.sample_rate(),
            t0: x.t0(),
            d_target,
            truncation_floor: floor,
            component_gain: gain,
            allocation,
            components,
            state_flags: options.state_flags.clone(),
            suppressed_bands: suppressed,
        },
        payloads,
    )
}

pub fn decompress_pipeline(blob: &CompressedBlob) -> Result<WaveformSeries> {
    let h = &blob.header;
    h.plan.validate()?;
    let len = h.plan.baseband_len(h.n_samples);
    let mut bands: Vec<SubbandSignal> = (1..=h.plan.m)
        .map(|k| SubbandSignal {
            baseband: vec![Complex64::new(0.0, 0.0); len],
            center_freq: k as f64 * h.plan.f0,
            rate: h.plan.baseband_rate(),
            group_delay: h.plan.group_delay(),
        })
        .collect();
    if blob.payloads.len() != h.components.len() {
        return Err(Error::Blob("payload count differs from header".into()));
    }
    for (c, payload) in h.components.iter().zip(&blob.payloads) {
        if c.band == 0 || c.band > h.plan.m {
            return Err(Error::Blob(format!("component names band {}", c.band)));
        }
        if h.suppressed_bands.contains(&c.band) {
            continue;
        }
        let rec = match c.held_mean {
            Some(m) => vec![m; len],
            None => {
                let indices = unpack_indices(payload, c.codebook.bits(), c.count)?;
                let mut rec = c.warmup.clone();
                for i in indices {
                    let pred = prediction(&c.model, &rec);
                    rec.push(pred + c.codebook.value(i));
                }
                rec
            }
        };
        if rec.len() != len {
            return Err(Error::Blob(format!(
                "band {} decodes to {} samples, plan needs {len}",
                c.band,
                rec.len()
            )));
        }
        let target = &mut bands[c.band - 1].baseband;
        for (z, v) in target.iter_mut().zip(rec) {
            if c.quadrature {
                z.im = v;
            } else {
                z.re = v;
            }
        }
    }
    subband_reconstruct(&bands, &h.plan, h.n_samples, h.t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn signal(n: usize, fs: f64, seed: u64) -> WaveformSeries {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from(seed);
        let x = (0..n)
            .map(|t| {
                let tt = t as f64 / fs;
                let env = 100.0 + 5.0 * (TAU * 0.3 * tt).sin();
                env * (TAU * 60.0 * tt + 0.2).sin() + 0.5 * (rng.random::<f64>() - 0.5)
            })
            .collect();
        WaveformSeries::new(x, fs, 0.0).unwrap()
    }

    #[test]
    fn blob_bytes_round_trip() {
        let plan = SubbandPlan::for_rate(60.0, 5000.0, 2);
        let train = signal(50_000, 5000.0, 1);
        let models = train_subband_models(&train, &plan, 2).unwrap();
        let x = signal(30_000, 5000.0, 2);
        let blob = compress_pipeline(&x, &plan, 5.0, &models).unwrap();
        let bytes = blob.to_bytes();
        let back = CompressedBlob::from_bytes(&bytes).unwrap();
        assert_eq!(back.header_json, blob.header_json);
        assert_eq!(serde_json::to_vec(&back.header).unwrap(), blob.header_json);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn missing_model_is_config_error() {
        let plan = SubbandPlan::for_rate(60.0, 5000.0, 2);
        let train = signal(50_000, 5000.0, 1);
        let models = train_subband_models(&train, &plan, 2).unwrap();
        let x = signal(30_000, 5000.0, 2);
        assert!(matches!(
            compress_pipeline(&x, &plan, 0.5, &models[..1]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(CompressedBlob::from_bytes(b"XXXX\0\0\0\0"), Err(Error::Blob(_))));
    }
}
