//! Uniform scalar quantization of Gaussian innovations and index packing.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf};

/// Half-width of the quantizer span in standard deviations.
pub const SPAN_STDS: f64 = 4.0;

/// Uniform quantizer with `levels` cells covering `mean +- 4 std`; the outer
/// cells also absorb overload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub mean: f64,
    pub std: f64,
    pub levels: u32,
}

impl Codebook {
    pub fn step(&self) -> f64 {
        2.0 * SPAN_STDS * self.std / f64::from(self.levels)
    }

    pub fn bits(&self) -> u32 {
        bits_for_levels(self.levels)
    }

    pub fn index(&self, z: f64) -> u32 {
        if self.levels <= 1 || !(self.std > 0.0) {
            return 0;
        }
        let lo = self.mean - SPAN_STDS * self.std;
        let cell = ((z - lo) / self.step()).floor();
        cell.clamp(0.0, f64::from(self.levels - 1)) as u32
    }

    pub fn value(&self, index: u32) -> f64 {
        if self.levels <= 1 {
            return self.mean;
        }
        let lo = self.mean - SPAN_STDS * self.std;
        lo + (f64::from(index.min(self.levels - 1)) + 0.5) * self.step()
    }
}

pub fn bits_for_levels(levels: u32) -> u32 {
    if levels <= 1 {
        0
    } else {
        32 - (levels - 1).leading_zeros()
    }
}

/// Quantizes `z` with `2^ceil(rate / ln 2)` levels around its sample mean and std.
pub fn quantize_gaussian(z: &[f64], rate_per_sample: f64) -> Result<(Vec<u32>, Codebook)> {
    if !(rate_per_sample >= 0.0) || !rate_per_sample.is_finite() {
        return Err(Error::Argument(format!("rate {rate_per_sample} must be >= 0")));
    }
    let n = z.len().max(1) as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let bits = (rate_per_sample / LN_2).ceil();
    if bits > 31.0 {
        return Err(Error::Argument(format!("rate {rate_per_sample} nats exceeds 31 bits")));
    }
    let book = Codebook { mean, std, levels: 1u32 << bits as u32 };
    Ok((z.iter().map(|&v| book.index(v)).collect(), book))
}

pub fn dequantize(indices: &[u32], codebook: &Codebook) -> Vec<f64> {
    indices.iter().map(|&i| codebook.value(i)).collect()
}

/// MSE contributed by inputs beyond the span when the outer cells are
/// centred on its edges: `2 [(1 + a^2) Q(a) - a phi(a)]` at `a = 4`. No level
/// count gets below it.
pub fn overload_mse() -> f64 {
    let a = SPAN_STDS;
    2.0 * ((1.0 + a * a) * norm_cdf(-a) - a * norm_pdf(a))
}

/// Exact MSE of the `levels`-cell quantizer on a standard normal input.
pub fn gaussian_quantizer_mse(levels: u32) -> f64 {
    if levels <= 1 {
        return 1.0;
    }
    if levels > 4096 {
        // Interior cells are granular; the two outer cells are integrated exactly.
        let step = 2.0 * SPAN_STDS / f64::from(levels);
        let (a, c) = (SPAN_STDS - step, SPAN_STDS - 0.5 * step);
        let tail = norm_cdf(-a);
        let outer = (1.0 + c * c) * tail + (a - 2.0 * c) * norm_pdf(a);
        return (1.0 - 2.0 * tail) * step * step / 12.0 + 2.0 * outer;
    }
    let book = Codebook { mean: 0.0, std: 1.0, levels };
    let step = book.step();
    let mut mse = 0.0;
    for i in 0..levels {
        let a = if i == 0 { f64::NEG_INFINITY } else { -SPAN_STDS + f64::from(i) * step };
        let b = if i == levels - 1 { f64::INFINITY } else { -SPAN_STDS + f64::from(i + 1) * step };
        let c = book.value(i);
        let (pa, pb) = (norm_pdf(a), norm_pdf(b));
        let apa = if a.is_finite() { a * pa } else { 0.0 };
        let bpb = if b.is_finite() { b * pb } else { 0.0 };
        mse += (norm_cdf(b) - norm_cdf(a)) * (1.0 + c * c) - (bpb - apa) - 2.0 * c * (pa - pb);
    }
    mse
}

/// Level count for a target relative distortion `d`: the first count at or
/// above three quarters of the granular-noise estimate whose exact MSE meets
/// `d`. Very coarse quantizers with this span are worse than the mean alone,
/// so small counts are scanned rather than bisected.
pub fn levels_for_distortion(d: f64) -> Result<u32> {
    if d >= 1.0 {
        return Ok(1);
    }
    let granular = d - overload_mse();
    if !(granular > 0.0) {
        return Err(Error::Argument(format!(
            "relative distortion {d} is below the overload floor {}",
            overload_mse()
        )));
    }
    let estimate = (2.0 * SPAN_STDS / (12.0 * granular).sqrt()).ceil();
    if estimate > 4096.0 {
        if estimate > f64::from(1u32 << 31) {
            return Err(Error::Argument(format!("relative distortion {d} needs over 31 bits")));
        }
        return Ok(estimate as u32);
    }
    let estimate = estimate as u32;
    let start = if estimate <= 64 { 2 } else { estimate * 3 / 4 };
    Ok((start..=4096)
        .find(|&l| gaussian_quantizer_mse(l) <= d)
        .unwrap_or(4097))
}

/// Packs `bits`-wide indices LSB-first.
pub fn pack_indices(indices: &[u32], bits: u32) -> Vec<u8> {
    if bits == 0 {
        return Vec::new();
    }
    let mut out = vec![0u8; (indices.len() * bits as usize).div_ceil(8)];
    let mut pos = 0usize;
    for &v in indices {
        for b in 0..bits {
            if (v >> b) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

pub fn unpack_indices(bytes: &[u8], bits: u32, count: usize) -> Result<Vec<u32>> {
    if bits == 0 {
        return Ok(vec![0; count]);
    }
    if bytes.len() * 8 < count * bits as usize {
        return Err(Error::Blob(format!(
            "{} payload bytes cannot hold {count} indices of {bits} bits",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..bits {
            if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            pos += 1;
        }
        out.push(v);
    }
    Ok(out)
}

/// Empirical entropy of an index sequence, in nats.
pub fn index_entropy(indices: &[u32]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for &i in indices {
        *counts.entry(i).or_insert(0usize) += 1;
    }
    let n = indices.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}
