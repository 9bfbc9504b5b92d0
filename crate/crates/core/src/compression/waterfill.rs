//! Inverse water-filling over parallel Gaussian components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub variances: Vec<f64>,
    pub distortions: Vec<f64>,
    pub water_level: f64,
    /// Nats per sample vector.
    pub total_rate: f64,
}

impl RateAllocation {
    /// Per-component rates in nats.
    pub fn rates(&self) -> Vec<f64> {
        self.variances
            .iter()
            .zip(&self.distortions)
            .map(|(&s, &d)| component_rate(s, d))
            .collect()
    }
}

fn component_rate(var: f64, d: f64) -> f64 {
    if d <= 0.0 || var <= d {
        0.0
    } else {
        0.5 * (var / d).ln()
    }
}

/// `D_i = min(theta, sigma_i^2)` with `sum D_i = d_target`.
pub fn allocate_distortion(variances: &[f64], d_target: f64) -> Result<RateAllocation> {
    if !(d_target > 0.0) || !d_target.is_finite() {
        return Err(Error::Argument(format!("target distortion {d_target} must be positive")));
    }
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Argument("variances must be finite and >= 0".into()));
    }
    let total: f64 = variances.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("at least one variance must be positive".into()));
    }
    let theta = if d_target >= total {
        variances.iter().copied().fold(0.0, f64::max)
    } else {
        // Bracket theta between consecutive sorted variances, then solve the
        // linear piece exactly.
        let mut sorted = variances.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut below = 0.0;
        let mut theta = 0.0;
        for (i, &s) in sorted.iter().enumerate() {
            let active = (n - i) as f64;
            if below + active * s >= d_target {
                theta = (d_target - below) / active;
                break;
            }
            below += s;
        }
        theta
    };
    let distortions: Vec<f64> = variances.iter().map(|&s| s.min(theta)).collect();
    let total_rate = variances
        .iter()
        .zip(&distortions)
        .map(|(&s, &d)| component_rate(s, d))
        .sum();
    Ok(RateAllocation {
        variances: variances.to_vec(),
        distortions,
        water_level: theta,
        total_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_band_hand_solution() {
        let a = allocate_distortion(&[4.0, 1.0], 2.0).unwrap();
        assert!((a.water_level - 1.0).abs() < 1e-15);
        assert_eq!(a.distortions, vec![1.0, 1.0]);
        assert!((a.total_rate - 0.5 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_coding_needed() {
        let a = allocate_distortion(&[4.0, 1.0], 5.0).unwrap();
        assert_eq!(a.total_rate, 0.0);
        assert_eq!(a.distortions, vec![4.0, 1.0]);
    }

    #[test]
    fn single_band() {
        let a = allocate_distortion(&[1.0], 0.25).unwrap();
        assert!((a.total_rate - 0.5 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(allocate_distortion(&[1.0], 0.0).is_err());
        assert!(allocate_distortion(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn zero_variance_band_gets_nothing() {
        let a = allocate_distortion(&[0.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(a.distortions[0], 0.0);
        assert!((a.distortions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
