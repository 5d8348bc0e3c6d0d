//! Composite mobility index: pooled standardization of the sub-indices over the
//! pre-treatment window of all retained units, then a simple average.

use serde::{Deserialize, Serialize};

use super::{AlignedPanel, MOBILITY_SUBINDICES};
use crate::error::PanelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    /// Sub-index names drawn from [`MOBILITY_SUBINDICES`].
    pub subindices: Vec<String>,
    /// Largest tolerated fraction of missing (unit, day, sub-index) cells.
    pub missing_tolerance: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            subindices: MOBILITY_SUBINDICES.iter().map(|s| s.to_string()).collect(),
            missing_tolerance: 0.0,
        }
    }
}

/// Standardization statistics kept for audit, plus the composite series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityIndex {
    pub subindices: Vec<String>,
    pub means: Vec<f64>,
    /// `None` marks a zero-variance sub-index, standardized to all zeros.
    pub sds: Vec<Option<f64>>,
    /// Pre-treatment days pooled into the statistics.
    pub window_days: usize,
    pub missing_cells: usize,
    pub total_cells: usize,
    values: Vec<Option<Vec<f64>>>,
}

impl MobilityIndex {
    /// Composite for aligned unit `i` over `[1, T_end]`.
    pub(crate) fn series(&self, i: usize) -> Option<&[f64]> {
        self.values.get(i).and_then(|v| v.as_deref())
    }
}

/// Adds the composite `mob` series to every retained unit.
pub fn build_mobility_index(
    panel: &AlignedPanel,
    config: &MobilityConfig,
) -> Result<AlignedPanel, PanelError> {
    let index = compute_mobility(panel, config)?;
    let mut out = panel.clone();
    out.set_mobility(config.clone(), index);
    Ok(out)
}

pub(super) fn compute_mobility(
    panel: &AlignedPanel,
    config: &MobilityConfig,
) -> Result<MobilityIndex, PanelError> {
    if config.subindices.is_empty() {
        return Err(PanelError::InvalidConfig("no mobility sub-indices".into()));
    }
    let mut cols = Vec::new();
    for name in &config.subindices {
        let c = MOBILITY_SUBINDICES
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| PanelError::UnknownSubIndex(name.clone()))?;
        if cols.contains(&c) {
            return Err(PanelError::InvalidConfig(format!(
                "sub-index `{name}` listed twice"
            )));
        }
        cols.push(c);
    }
    let retained = panel.retained_indices();
    let units = panel.all_units();
    let t0 = panel.t0();
    let t_end = panel.t_end();

    let mut means = Vec::with_capacity(cols.len());
    let mut sds = Vec::with_capacity(cols.len());
    for &c in &cols {
        let pool: Vec<f64> = retained
            .iter()
            .flat_map(|&i| units[i].mobility[..t0].iter().filter_map(move |m| m[c]))
            .collect();
        let n = pool.len() as f64;
        let mean = if pool.is_empty() {
            0.0
        } else {
            pool.iter().sum::<f64>() / n
        };
        let sd = if pool.len() < 2 {
            None
        } else {
            let var = pool.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            (sd > f64::EPSILON * mean.abs().max(1.0)).then_some(sd)
        };
        means.push(mean);
        sds.push(sd);
    }

    let total = retained.len() * t_end * cols.len();
    let mut missing = 0usize;
    let mut empty_row = false;
    let mut values = vec![None; units.len()];
    for &i in &retained {
        let mut series = Vec::with_capacity(t_end);
        for day in &units[i].mobility[..t_end] {
            let mut z: Vec<f64> = Vec::with_capacity(cols.len());
            for (k, &c) in cols.iter().enumerate() {
                match day[c] {
                    Some(v) => z.push(match sds[k] {
                        Some(sd) => (v - means[k]) / sd,
                        None => 0.0,
                    }),
                    None => missing += 1,
                }
            }
            if z.is_empty() {
                empty_row = true;
                series.push(f64::NAN);
                continue;
            }
            // fixed summation order so the composite ignores sub-index order
            z.sort_by(f64::total_cmp);
            series.push(z.iter().sum::<f64>() / z.len() as f64);
        }
        values[i] = Some(series);
    }
    if empty_row || missing as f64 > config.missing_tolerance * total as f64 {
        return Err(PanelError::MobilityMissing {
            missing,
            total,
            tolerance: config.missing_tolerance,
        });
    }
    Ok(MobilityIndex {
        subindices: config.subindices.clone(),
        means,
        sds,
        window_days: t0,
        missing_cells: missing,
        total_cells: total,
        values,
    })
}
