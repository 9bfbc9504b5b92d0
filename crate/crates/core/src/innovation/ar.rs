//! Autoregressive fitting primitives.
//!
//! Sign convention throughout: `x[t] = sum_i a[i] * x[t - 1 - i] + e[t]`.

use crate::error::{Error, Result};

/// Result of fitting an AR(p) predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    /// One-step predictor weights a1..ap.
    pub coeffs: Vec<f64>,
    /// Reflection (partial autocorrelation) coefficients k1..kp.
    pub reflection: Vec<f64>,
    /// Prediction-error variance of the order-p predictor.
    pub error_variance: f64,
}

/// Biased sample autocovariances gamma_0..gamma_max_lag of the mean-removed series.
pub fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                0.0
            } else {
                centered[..n - k]
                    .iter()
                    .zip(&centered[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / n as f64
            }
        })
        .collect()
}

/// Levinson-Durbin recursion on autocovariances `r[0..=p]`.
pub fn levinson_durbin(r: &[f64]) -> Result<ArFit> {
    if r.is_empty() {
        return Err(Error::Argument("need at least gamma_0".into()));
    }
    let p = r.len() - 1;
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::Degenerate(format!(
            "zero-lag autocovariance {} is not positive",
            r[0]
        )));
    }
    let mut a: Vec<f64> = Vec::with_capacity(p);
    let mut reflection = Vec::with_capacity(p);
    let mut err = r[0];
    for m in 0..p {
        let acc = r[m + 1] - a.iter().enumerate().map(|(i, ai)| ai * r[m - i]).sum::<f64>();
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Degenerate(format!(
                "autocovariance sequence is not positive definite at lag {}",
                m + 1
            )));
        }
        let prev = a.clone();
        for i in 0..m {
            a[i] = prev[i] - k * prev[m - 1 - i];
        }
        a.push(k);
        reflection.push(k);
        err *= 1.0 - k * k;
    }
    if !(err > 0.0) {
        return Err(Error::Degenerate("prediction error variance vanished".into()));
    }
    Ok(ArFit {
        coeffs: a,
        reflection,
        error_variance: err,
    })
}

/// Burg's method: reflection coefficients from forward and backward
/// prediction errors, combined with the same order update as Levinson-Durbin.
///
/// Unlike the autocovariance route this does not taper the data, which
/// matters for nearly deterministic (oversampled sinusoidal) signals.
pub fn burg(x: &[f64], order: usize) -> Result<ArFit> {
    let n = x.len();
    if n <= order {
        return Err(Error::Argument(format!(
            "series of length {n} too short for order {order}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut f: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mut b = f.clone();
    let mut err = f.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(err > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let mut a: Vec<f64> = Vec::with_capacity(order);
    let mut reflection = Vec::with_capacity(order);
    for m in 0..order {
        let (mut num, mut den) = (0.0, 0.0);
        for t in (m + 1)..n {
            num += f[t] * b[t - 1];
            den += f[t] * f[t] + b[t - 1] * b[t - 1];
        }
        if !(den > 0.0) {
            return Err(Error::Degenerate(format!(
                "prediction errors vanished at order {}",
                m + 1
            )));
        }
        let k = 2.0 * num / den;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Degenerate(format!(
                "reflection coefficient {k} at order {} is not strictly inside (-1, 1)",
                m + 1
            )));
        }
        // Update errors from the top down so b[t - 1] is still the old value.
        for t in ((m + 1)..n).rev() {
            let ft = f[t];
            let bt = b[t - 1];
            f[t] = ft - k * bt;
            b[t] = bt - k * ft;
        }
        let prev = a.clone();
        for i in 0..m {
            a[i] = prev[i] - k * prev[m - 1 - i];
        }
        a.push(k);
        reflection.push(k);
        err *= 1.0 - k * k;
    }
    Ok(ArFit {
        coeffs: a,
        reflection,
        error_variance: err,
    })
}

/// Step-down recursion. Returns the reflection coefficients and every
/// intermediate-order predictor (`predictors[m]` has length `m`).
pub fn step_down(coeffs: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = coeffs.len();
    let mut predictors = vec![Vec::new(); p + 1];
    predictors[p] = coeffs.to_vec();
    let mut reflection = vec![0.0; p];
    for m in (1..=p).rev() {
        let cur = &predictors[m];
        let k = cur[m - 1];
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Degenerate(format!(
                "AR polynomial is not stable: reflection coefficient {k} at order {m}"
            )));
        }
        reflection[m - 1] = k;
        let denom = 1.0 - k * k;
        let lower: Vec<f64> = (0..m - 1)
            .map(|i| (cur[i] + k * cur[m - 2 - i]) / denom)
            .collect();
        predictors[m - 1] = lower;
    }
    Ok((reflection, predictors))
}

/// True when every reflection coefficient lies strictly inside (-1, 1).
pub fn is_stable(coeffs: &[f64]) -> bool {
    step_down(coeffs).is_ok()
}

/// Autocovariances gamma_0..gamma_p of the stationary AR process with the
/// given predictor and innovation variance.
pub fn stationary_autocovariance(coeffs: &[f64], innovation_var: f64) -> Result<Vec<f64>> {
    let (reflection, predictors) = step_down(coeffs)?;
    let p = coeffs.len();
    let shrink: f64 = reflection.iter().map(|k| 1.0 - k * k).product();
    let mut gamma = vec![0.0; p + 1];
    gamma[0] = innovation_var / shrink;
    let mut err = gamma[0];
    for m in 1..=p {
        let k = reflection[m - 1];
        let prev = &predictors[m - 1];
        gamma[m] = k * err + prev.iter().enumerate().map(|(i, a)| a * gamma[m - 1 - i]).sum::<f64>();
        err *= 1.0 - k * k;
    }
    Ok(gamma)
}
