use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    Ok(())
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(estimate, truth)?;
    let e: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
    Ok(rms(&e))
}

/// RMSE divided by the RMS of the truth; `None` for an all-zero truth.
pub fn normalized_rmse(estimate: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    let e = rmse(estimate, truth)?;
    let t = rms(truth);
    Ok((t > 0.0).then(|| e / t))
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn correlation(estimate: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check_lengths(estimate, truth)?;
    let n = estimate.len() as f64;
    let ma = estimate.iter().sum::<f64>() / n;
    let mb = truth.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in estimate.iter().zip(truth) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

pub fn peak_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(estimate, truth)?;
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Second-order Butterworth low-pass section (bilinear transform).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is 1.
    pub a: [f64; 3],
}

impl Biquad {
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        let nyquist = 0.5 * sample_rate_hz;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        })
    }

    /// Direct form II transposed, started in steady state for a constant
    /// input equal to `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let x0 = x.first().copied().unwrap_or(0.0);
        let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let y0 = gain * x0;
        let mut z1 = y0 - b0 * x0;
        let mut z2 = b2 * x0 - a2 * y0;
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Zero-phase forward-backward filtering with odd extension at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = 9.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// RMS of the low-frequency part of `estimate − truth` (below `cutoff_hz`,
/// zero-phase Butterworth), divided by the RMS of `truth`.
pub fn drift_metric(estimate: &[f64], truth: &[f64], dt: f64, cutoff_hz: f64) -> Result<f64> {
    check_lengths(estimate, truth)?;
    let lp = Biquad::butterworth_lowpass(cutoff_hz, 1.0 / dt)?;
    let t = rms(truth);
    if t == 0.0 {
        return Err(Error::invalid("drift metric needs a nonzero truth signal"));
    }
    let e: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
    Ok(rms(&lp.filtfilt(&e)) / t)
}

/// Comparison of one estimated signal against the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalMetrics {
    pub rmse: f64,
    pub normalized_rmse: Option<f64>,
    pub drift: Option<f64>,
    pub peak_error: f64,
    pub correlation: Option<f64>,
}

pub fn signal_metrics(
    estimate: &[f64],
    truth: &[f64],
    dt: f64,
    cutoff_hz: f64,
) -> Result<SignalMetrics> {
    Ok(SignalMetrics {
        rmse: rmse(estimate, truth)?,
        normalized_rmse: normalized_rmse(estimate, truth)?,
        drift: match drift_metric(estimate, truth, dt, cutoff_hz) {
            Ok(v) => Some(v),
            Err(Error::Validation(_)) if rms(truth) == 0.0 => None,
            Err(e) => return Err(e),
        },
        peak_error: peak_error(estimate, truth)?,
        correlation: correlation(estimate, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_negated() {
        let t: Vec<f64> = (0..100).map(|k| (k as f64 * 0.1).sin()).collect();
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!((correlation(&t, &t).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((correlation(&neg, &t).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(drift_metric(&t, &t, 0.01, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn constant_truth_has_no_correlation() {
        assert_eq!(correlation(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), None);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn butterworth_dc_and_nyquist() {
        let f = Biquad::butterworth_lowpass(1.0, 100.0).unwrap();
        let dc: f64 = f.b.iter().sum::<f64>() / f.a.iter().sum::<f64>();
        assert!((dc - 1.0).abs() < 1e-12);
        let ny = (f.b[0] - f.b[1] + f.b[2]) / (f.a[0] - f.a[1] + f.a[2]);
        assert!(ny.abs() < 1e-12);
        // constant input passes unchanged from the first sample
        assert!(f.filtfilt(&[2.5; 50]).iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!(Biquad::butterworth_lowpass(50.0, 100.0).is_err());
    }

    #[test]
    fn ramp_drift_scales_with_slope() {
        let dt = 0.01;
        let truth: Vec<f64> = (0..3000).map(|k| (k as f64 * dt * 7.0).sin()).collect();
        let drift = |slope: f64| {
            let est: Vec<f64> = truth
                .iter()
                .enumerate()
                .map(|(k, v)| v + slope * k as f64 * dt)
                .collect();
            drift_metric(&est, &truth, dt, 0.1).unwrap()
        };
        let (d1, d2) = (drift(0.01), drift(0.02));
        assert!(d1 > 0.0);
        assert!((d2 / d1 - 2.0).abs() < 1e-9);
    }
}
