//! Neyman's smooth test for IID-uniformity on [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::model::ArInnovationModel;
use crate::special::chi_square_cdf;
use crate::waveform::WaveformSeries;

pub const MAX_KERNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NstConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
}

impl Default for NstConfig {
    fn default() -> Self {
        Self { k: 4, epsilon: 0.05 }
    }
}

impl NstConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_KERNELS).contains(&self.k) {
            return Err(Error::Config(format!("K = {} outside 1..={MAX_KERNELS}", self.k)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        chi_square_quantile(self.k, 1.0 - self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NstResult {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub n: usize,
    pub components: Vec<f64>,
}

/// Writes `P_0(u)..P_k(u)` into `out` by the three-term recurrence.
#[inline]
fn legendre_all(u: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = u;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = ((2.0 * nf + 1.0) * u * out[n] - nf * out[n - 1]) / (nf + 1.0);
    }
}

/// Orthonormal shifted Legendre polynomial `sqrt(2k+1) P_k(2x - 1)`.
pub fn legendre_kernel(k: usize, x: f64) -> Result<f64> {
    if !(1..=MAX_KERNELS).contains(&k) {
        return Err(Error::Argument(format!("kernel index {k} outside 1..={MAX_KERNELS}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Argument(format!("kernel argument {x} outside [0, 1]")));
    }
    let mut p = [0.0; MAX_KERNELS + 1];
    legendre_all(2.0 * x - 1.0, &mut p[..=k]);
    Ok(((2 * k + 1) as f64).sqrt() * p[k])
}

/// Quantile of the chi-square law with `dof` degrees of freedom, by bisection
/// on the regularized incomplete gamma function.
pub fn chi_square_quantile(dof: usize, prob: f64) -> f64 {
    assert!(dof >= 1 && prob > 0.0 && prob < 1.0, "chi_square_quantile({dof}, {prob})");
    let mut hi = dof as f64 + 10.0;
    while chi_square_cdf(dof, hi) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    // 200 halvings take any bracket below one ulp.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_cdf(dof, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Running kernel sums, so windows can grow without rescanning.
#[derive(Debug, Clone)]
pub struct NstAccumulator {
    sums: Vec<f64>,
    scale: Vec<f64>,
    n: usize,
    buf: Vec<f64>,
}

impl NstAccumulator {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=MAX_KERNELS).contains(&k) {
            return Err(Error::Argument(format!("K = {k} outside 1..={MAX_KERNELS}")));
        }
        Ok(Self {
            sums: vec![0.0; k],
            scale: (1..=k).map(|i| ((2 * i + 1) as f64).sqrt()).collect(),
            n: 0,
            buf: vec![0.0; k + 1],
        })
    }

    pub fn push(&mut self, v: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("sample {v} outside [0, 1]")));
        }
        legendre_all(2.0 * v - 1.0, &mut self.buf);
        for (i, s) in self.sums.iter_mut().enumerate() {
            *s += self.scale[i] * self.buf[i + 1];
        }
        self.n += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(T, components)` over everything pushed so far.
    pub fn statistic(&self) -> Result<(f64, Vec<f64>)> {
        if self.n == 0 {
            return Err(Error::Argument("statistic of an empty sample".into()));
        }
        let norm = (self.n as f64).sqrt();
        let components: Vec<f64> = self.sums.iter().map(|s| s / norm).collect();
        let t = components.iter().map(|c| c * c).sum();
        Ok((t, components))
    }
}

pub fn nst_statistic(v: &[f64], k: usize) -> Result<(f64, Vec<f64>)> {
    let mut acc = NstAccumulator::new(k)?;
    for &x in v {
        acc.push(x)?;
    }
    acc.statistic()
}

pub fn nst_test(v: &[f64], config: &NstConfig) -> Result<NstResult> {
    config.validate()?;
    let (statistic, components) = nst_statistic(v, config.k)?;
    let threshold = config.threshold();
    Ok(NstResult {
        statistic,
        threshold,
        decision: if statistic > threshold { Decision::H1 } else { Decision::H0 },
        n: v.len(),
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyOutcome {
    Known(usize),
    Novelty,
}

/// Tests `x` against each model in turn; the first one whose innovations pass
/// the uniformity test names the class.
pub fn detect_novelty(
    models: &[ArInnovationModel],
    x: &WaveformSeries,
    config: &NstConfig,
) -> Result<NoveltyOutcome> {
    if models.is_empty() {
        return Err(Error::Argument("empty model dictionary".into()));
    }
    for (i, m) in models.iter().enumerate() {
        let v = m.encode(x)?;
        if nst_test(&v.values, config)?.decision == Decision::H0 {
            return Ok(NoveltyOutcome::Known(i));
        }
    }
    Ok(NoveltyOutcome::Novelty)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `v` and U[0, 1].
pub fn ks_uniform(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
