//! Accuracy metrics: bias-removed RMSE, Pearson correlation and travelled
//! distance deviation.

use std::collections::BTreeMap;

use lgpose_core::lie::Vec3;
use lgpose_core::Side;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{PoseRow, ANGLE_COLUMNS};

/// Largest timestamp difference accepted between matching rows (s).
pub const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series lengths differ ({est} vs {reference})")]
    LengthMismatch { est: usize, reference: usize },

    #[error("need at least two samples, got {0}")]
    TooShort(usize),

    #[error("reference path has zero length")]
    ZeroReferenceDistance,

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("timestamps differ at row {index} ({est} vs {reference})")]
    Misaligned { index: usize, est: f64, reference: f64 },
}

fn check_lengths(est: usize, reference: usize) -> Result<(), MetricsError> {
    if est != reference {
        return Err(MetricsError::LengthMismatch { est, reference });
    }
    if est < 2 {
        return Err(MetricsError::TooShort(est));
    }
    Ok(())
}

/// RMS of the error after subtracting its mean. Single pass (Welford).
pub fn rmse_bias_removed(est: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(est.len(), reference.len())?;
    let (mut mean, mut m2) = (0.0, 0.0);
    for (n, (a, b)) in est.iter().zip(reference).enumerate() {
        let e = a - b;
        let delta = e - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (e - mean);
    }
    Ok((m2 / est.len() as f64).max(0.0).sqrt())
}

/// Pearson correlation, accumulated in a single pass.
pub fn pearson_cc(est: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(est.len(), reference.len())?;
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, (&x, &y)) in est.iter().zip(reference).enumerate() {
        let k = (n + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / k;
        my += dy / k;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn path_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Relative difference in total travelled distance, in percent.
pub fn ttd_deviation(est: &[Vec3], reference: &[Vec3]) -> Result<f64, MetricsError> {
    check_lengths(est.len(), reference.len())?;
    let reference_len = path_length(reference);
    if reference_len == 0.0 {
        return Err(MetricsError::ZeroReferenceDistance);
    }
    Ok((path_length(est) - reference_len).abs() / reference_len * 100.0)
}

/// Shifts each reference angle by a multiple of 360° so it lies within 180°
/// of the estimate.
fn unwrap_towards(est: &[f64], reference: &[f64]) -> Vec<f64> {
    est.iter()
        .zip(reference)
        .map(|(a, b)| b + 360.0 * ((a - b) / 360.0).round())
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TtdDeviation {
    pub ankle_l: Option<f64>,
    pub ankle_r: Option<f64>,
}

/// Per-angle accuracy. Entries are `null` when a metric is undefined, such as
/// the correlation of a constant series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_deg: BTreeMap<String, f64>,
    pub cc: BTreeMap<String, Option<f64>>,
    pub ttd_dev_pct: TtdDeviation,
    /// Filter wall time for the estimate, when known.
    pub runtime_ms: Option<f64>,
}

pub fn evaluate(est: &[PoseRow], reference: &[PoseRow]) -> Result<MetricsReport, MetricsError> {
    check_lengths(est.len(), reference.len())?;
    if let Some(index) = est.iter().zip(reference).position(|(a, b)| !((a.t - b.t).abs() <= TIME_TOL)) {
        return Err(MetricsError::Misaligned {
            index,
            est: est[index].t,
            reference: reference[index].t,
        });
    }
    let mut report = MetricsReport::default();
    for (i, name) in ANGLE_COLUMNS.iter().enumerate() {
        let e: Vec<f64> = est.iter().map(|r| r.angles_deg[i]).collect();
        let r = unwrap_towards(&e, &reference.iter().map(|r| r.angles_deg[i]).collect::<Vec<_>>());
        report.rmse_deg.insert(name.to_string(), rmse_bias_removed(&e, &r)?);
        report.cc.insert(name.to_string(), pearson_cc(&e, &r).ok());
    }
    let ttd = |side: Side| {
        let e: Vec<Vec3> = est.iter().map(|r| r.ankle(side)).collect();
        let r: Vec<Vec3> = reference.iter().map(|r| r.ankle(side)).collect();
        ttd_deviation(&e, &r).ok()
    };
    report.ttd_dev_pct = TtdDeviation {
        ankle_l: ttd(Side::Left),
        ankle_r: ttd(Side::Right),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let r = [0.3, 1.0, -2.0, 4.5];
        assert_eq!(rmse_bias_removed(&r, &r).unwrap(), 0.0);
        let shifted: Vec<f64> = r.iter().map(|v| v + 5.0).collect();
        assert!(rmse_bias_removed(&shifted, &r).unwrap() < 1e-12);
        let alternating = [1.0, -1.0, 1.0, -1.0];
        assert!((rmse_bias_removed(&alternating, &[0.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            rmse_bias_removed(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { est: 1, reference: 2 })
        );
        assert_eq!(rmse_bias_removed(&[1.0], &[1.0]), Err(MetricsError::TooShort(1)));
    }

    #[test]
    fn cc_examples() {
        let r = [0.3, 1.0, -2.0, 4.5];
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        assert!((pearson_cc(&r, &r).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_cc(&neg, &r).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson_cc(&[1.0, 1.0], &[0.0, 2.0]), Err(MetricsError::ZeroVariance));
    }

    #[test]
    fn ttd_examples() {
        let path: Vec<Vec3> = (0..10).map(|k| Vec3::new(k as f64 * 0.1, (k as f64).sin(), 0.0)).collect();
        assert_eq!(ttd_deviation(&path, &path).unwrap(), 0.0);
        let scaled: Vec<Vec3> = path.iter().map(|p| path[0] + (p - path[0]) * 1.1).collect();
        assert!((ttd_deviation(&scaled, &path).unwrap() - 10.0).abs() < 1e-12);
        let reversed: Vec<Vec3> = path.iter().rev().copied().collect();
        assert!(ttd_deviation(&reversed, &path).unwrap() < 1e-12);
        let still = vec![Vec3::zeros(); 4];
        assert_eq!(ttd_deviation(&still, &still), Err(MetricsError::ZeroReferenceDistance));
    }

    #[test]
    fn unwrap_keeps_errors_small() {
        let est = [179.0, -179.0];
        let reference = [-179.0, 179.0];
        assert_eq!(unwrap_towards(&est, &reference), vec![181.0, -181.0]);
    }
}
