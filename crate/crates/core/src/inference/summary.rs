use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::InferenceError;
use crate::specs::enumerate_specs;

/// Pointwise summary of gap series across specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    /// Median absolute deviation from the median (unscaled).
    pub mad: Vec<f64>,
    /// `median − 2.5 · mad`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const MAD_MULTIPLIER: f64 = 2.5;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mean, median and MAD band of equally long series, day by day.
pub fn summarize_series(series: &[&[f64]]) -> Result<SpecSummary, InferenceError> {
    let Some(first) = series.first() else {
        return Err(InferenceError::Insufficient("no series to summarize".into()));
    };
    let len = first.len();
    if let Some(s) = series.iter().find(|s| s.len() != len) {
        return Err(InferenceError::LengthMismatch {
            actual: len,
            synthetic: s.len(),
        });
    }
    let k = series.len() as f64;
    let mut out = SpecSummary {
        mean: Vec::with_capacity(len),
        median: Vec::with_capacity(len),
        mad: Vec::with_capacity(len),
        lower: Vec::with_capacity(len),
        upper: Vec::with_capacity(len),
    };
    let mut col = Vec::with_capacity(series.len());
    for d in 0..len {
        col.clear();
        col.extend(series.iter().map(|s| s[d]));
        let mean = col.iter().sum::<f64>() / k;
        let med = median(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|v| (v - med).abs()).collect();
        let mad = median(&mut dev);
        out.mean.push(mean);
        out.median.push(med);
        out.mad.push(mad);
        out.lower.push(med - MAD_MULTIPLIER * mad);
        out.upper.push(med + MAD_MULTIPLIER * mad);
    }
    Ok(out)
}

/// Summary across the sixteen grid specifications; every spec id must be
/// present.
pub fn spec_summary(gaps: &BTreeMap<String, Vec<f64>>) -> Result<SpecSummary, InferenceError> {
    let mut series = Vec::with_capacity(16);
    for s in enumerate_specs() {
        let g = gaps
            .get(s.id)
            .ok_or_else(|| InferenceError::MissingSpec(s.id.to_string()))?;
        series.push(g.as_slice());
    }
    summarize_series(&series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_have_zero_mad() {
        let s = [1.0, -2.0, 3.5];
        let out = summarize_series(&[&s, &s, &s]).unwrap();
        assert_eq!(out.mean, s);
        assert_eq!(out.median, s);
        assert!(out.mad.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn skewed_day() {
        let out = summarize_series(&[&[0.0], &[0.0], &[10.0]]).unwrap();
        assert_eq!(out.median[0], 0.0);
        assert_eq!(out.mad[0], 0.0);
        assert!((out.mean[0] - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_spec_is_named() {
        let mut m: BTreeMap<String, Vec<f64>> =
            enumerate_specs().iter().map(|s| (s.id.to_string(), vec![0.0])).collect();
        m.remove("b4");
        assert_eq!(spec_summary(&m), Err(InferenceError::MissingSpec("b4".into())));
    }
}
