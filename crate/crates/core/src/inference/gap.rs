use serde::{Deserialize, Serialize};

use crate::error::InferenceError;

/// Gaps between the actual and synthetic series and their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapAnalysis {
    /// `Y_1t − Ŷ_1t(0)` for days `1..=T_end`.
    pub gap: Vec<f64>,
    pub t0: usize,
    /// Mean post-treatment gap.
    pub att: f64,
    pub pre_rmspe: f64,
    pub post_rmspe: f64,
    /// `post_rmspe / pre_rmspe`; NaN when the pre-treatment fit is exact.
    pub rmspe_ratio: f64,
    pub ratio_undefined: bool,
}

impl GapAnalysis {
    pub fn post_gaps(&self) -> &[f64] {
        &self.gap[self.t0..]
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn gap_analysis(actual: &[f64], synthetic: &[f64], t0: usize) -> Result<GapAnalysis, InferenceError> {
    if actual.len() != synthetic.len() {
        return Err(InferenceError::LengthMismatch {
            actual: actual.len(),
            synthetic: synthetic.len(),
        });
    }
    if t0 == 0 || t0 >= actual.len() {
        return Err(InferenceError::InvalidT0 {
            t0,
            len: actual.len(),
        });
    }
    let gap: Vec<f64> = actual.iter().zip(synthetic).map(|(a, s)| a - s).collect();
    let post = &gap[t0..];
    let att = post.iter().sum::<f64>() / post.len() as f64;
    let pre_rmspe = rms(&gap[..t0]);
    let post_rmspe = rms(post);
    let ratio_undefined = pre_rmspe == 0.0;
    Ok(GapAnalysis {
        att,
        pre_rmspe,
        post_rmspe,
        rmspe_ratio: if ratio_undefined {
            f64::NAN
        } else {
            post_rmspe / pre_rmspe
        },
        ratio_undefined,
        gap,
        t0,
    })
}
