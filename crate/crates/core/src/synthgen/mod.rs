//! Seeded factor-model panels with known counterfactuals, and a replication
//! harness that scores the estimator against them.
//!
//! Untreated outcomes follow `Y_jt(0) = level + Σ_k λ_jk f_kt + ε_jt` with
//! random-walk factors drifting upward, so series look like cumulative counts.
//! Cases and mobility are affine in the noise-free component, and the treated
//! unit is (by default) a convex combination of donors in loadings, statics
//! and covariates, so with zero noise it lies inside the donors' hull.

mod study;

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::PanelError;
use crate::panel::{
    align_epidemic_day, build_mobility_index, AlignedPanel, MobilityConfig, Observation, Panel, Record,
    StaticCovariates,
};

pub use study::{
    run_replication_study, summarize_study, Metric, ReplicationRecord, ReplicationStudy, StudyReport,
    StudySummary,
};

/// Per-day effect on the treated unit after treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreatmentPath {
    Constant(f64),
    PerDay(Vec<f64>),
}

impl TreatmentPath {
    pub fn effect(&self, post_day: usize) -> f64 {
        match self {
            Self::Constant(t) => *t,
            Self::PerDay(v) => v[post_day],
        }
    }
}

/// How the treated unit is constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatedDesign {
    /// Convex combination with Dirichlet(`concentration`) weights.
    Dirichlet { concentration: f64 },
    /// Convex combination with fixed weights (normalized to sum to one).
    Weights(Vec<f64>),
    /// Drawn from the same distribution as the donors.
    Exchangeable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticFactorConfig {
    pub n_donors: usize,
    /// Pre-treatment days.
    pub t0: usize,
    /// Post-treatment days.
    pub t1: usize,
    pub n_factors: usize,
    pub noise_sd: f64,
    pub treatment_path: TreatmentPath,
    pub treated: TreatedDesign,
    /// Mean daily factor increment.
    pub factor_drift: f64,
    /// SD of the daily factor increment.
    pub factor_sd: f64,
    /// Loadings are uniform on `[loading_min, loading_max]`.
    pub loading_min: f64,
    pub loading_max: f64,
    /// Common outcome level on day 1.
    pub level: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticFactorConfig {
    fn default() -> Self {
        Self {
            n_donors: 10,
            t0: 15,
            t1: 34,
            n_factors: 2,
            noise_sd: 0.5,
            treatment_path: TreatmentPath::Constant(-5.0),
            treated: TreatedDesign::Dirichlet { concentration: 1.0 },
            factor_drift: 1.0,
            factor_sd: 0.5,
            loading_min: 0.5,
            loading_max: 1.5,
            level: 1.0,
            start_date: NaiveDate::from_ymd_opt(2020, 2, 1).unwrap(),
            seed: 0,
        }
    }
}

impl SyntheticFactorConfig {
    /// Named calibrations: `convex-hull` (one factor, no noise, no effect),
    /// `att-recovery` (two factors, σ = 0.5, τ = −5) and `placebo-null`
    /// (exchangeable treated unit, τ = 0).
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        Some(match name {
            "convex-hull" => Self {
                n_factors: 1,
                noise_sd: 0.0,
                treatment_path: TreatmentPath::Constant(0.0),
                ..base
            },
            "att-recovery" => base,
            "placebo-null" => Self {
                treatment_path: TreatmentPath::Constant(0.0),
                treated: TreatedDesign::Exchangeable,
                ..base
            },
            _ => return None,
        })
    }

    fn validate(&self) -> Result<(), PanelError> {
        let bad = |m: String| Err(PanelError::InvalidConfig(m));
        if self.n_donors < 2 {
            return bad(format!("n_donors must be at least 2, got {}", self.n_donors));
        }
        if self.t0 < 1 || self.t1 < 1 {
            return bad("t0 and t1 must be positive".into());
        }
        if self.n_factors < 1 {
            return bad("n_factors must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0 && self.factor_sd >= 0.0) {
            return bad("standard deviations must be non-negative".into());
        }
        if !(self.loading_min > 0.0 && self.loading_max >= self.loading_min) {
            return bad("loadings need 0 < loading_min <= loading_max".into());
        }
        if let TreatmentPath::PerDay(v) = &self.treatment_path {
            if v.len() != self.t1 {
                return bad(format!("treatment path has {} days, t1 is {}", v.len(), self.t1));
            }
        }
        match &self.treated {
            TreatedDesign::Weights(w) => {
                if w.len() != self.n_donors || w.iter().any(|&x| x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                    return bad("treated weights must be non-negative, one per donor".into());
                }
            }
            TreatedDesign::Dirichlet { concentration } if *concentration <= 0.0 => {
                return bad("Dirichlet concentration must be positive".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Generated panel with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: Panel,
    pub treated: String,
    pub donors: Vec<String>,
    /// Treated untreated outcome `Y_1t(0)`, days `1..=T`, noise included.
    pub counterfactual: Vec<f64>,
    /// Noise-free component of the treated unit.
    pub counterfactual_mean: Vec<f64>,
    /// Donor weights of the treated unit, when it is a convex combination.
    pub true_weights: Option<Vec<f64>>,
    /// Mean post-treatment effect.
    pub true_att: f64,
    pub t0: usize,
    pub t_end: usize,
}

/// Unit parameters. Every generated series is affine in these, so a convex
/// combination of donors' parameters yields the same combination of series.
impl SyntheticPanel {
    /// Aligned at threshold 1.0 with the default composite mobility index;
    /// every unit's day 1 is the first generated date.
    pub fn aligned(&self) -> Result<AlignedPanel, PanelError> {
        let a = align_epidemic_day(&self.panel, 1.0)?;
        build_mobility_index(&a, &MobilityConfig::default())
    }
}

struct UnitDraw {
    loadings: Vec<f64>,
    statics: StaticCovariates,
    /// Cases: `10 + case_level + Σ_k case_loadings[k] · f_kt`.
    case_level: f64,
    case_loadings: Vec<f64>,
    /// Sub-index `s`: `−(mob_level[s] + mob_loading[s] · Σ_k f_kt)`.
    mob_level: [f64; 4],
    mob_loading: [f64; 4],
}

impl UnitDraw {
    fn params(&self) -> Vec<f64> {
        let mut p = self.loadings.clone();
        p.extend([self.statics.hsp, self.statics.age, self.statics.hld, self.case_level]);
        p.extend(&self.case_loadings);
        p.extend(self.mob_level);
        p.extend(self.mob_loading);
        p
    }

    fn from_params(p: &[f64], k: usize) -> Self {
        Self {
            loadings: p[..k].to_vec(),
            statics: StaticCovariates {
                hsp: p[k],
                age: p[k + 1],
                hld: p[k + 2],
            },
            case_level: p[k + 3],
            case_loadings: p[k + 4..2 * k + 4].to_vec(),
            mob_level: std::array::from_fn(|s| p[2 * k + 4 + s]),
            mob_loading: std::array::from_fn(|s| p[2 * k + 8 + s]),
        }
    }
}

fn draw_unit(rng: &mut ChaCha8Rng, cfg: &SyntheticFactorConfig) -> UnitDraw {
    UnitDraw {
        loadings: (0..cfg.n_factors)
            .map(|_| rng.random_range(cfg.loading_min..=cfg.loading_max))
            .collect(),
        statics: StaticCovariates {
            hsp: rng.random_range(2.0..8.0),
            age: rng.random_range(38.0..47.0),
            hld: rng.random_range(2.0..3.0),
        },
        case_level: rng.random_range(0.0..20.0),
        case_loadings: (0..cfg.n_factors).map(|_| rng.random_range(20.0..60.0)).collect(),
        mob_level: std::array::from_fn(|_| rng.random_range(0.0..10.0)),
        mob_loading: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
    }
}

fn mix(draws: &[UnitDraw], w: &[f64]) -> UnitDraw {
    let k = draws[0].loadings.len();
    let mut p = vec![0.0; draws[0].params().len()];
    for (d, w) in draws.iter().zip(w) {
        for (acc, x) in p.iter_mut().zip(d.params()) {
            *acc += w * x;
        }
    }
    UnitDraw::from_params(&p, k)
}

/// Draws one panel. Deterministic in `config` (including its seed).
pub fn generate_synthetic_panel(config: &SyntheticFactorConfig) -> Result<SyntheticPanel, PanelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t_end = config.t0 + config.t1;
    let n = config.n_donors;

    let factors: Vec<Vec<f64>> = (0..config.n_factors)
        .map(|_| {
            let mut f = Vec::with_capacity(t_end);
            let mut level = 0.0;
            for _ in 0..t_end {
                f.push(level);
                let z: f64 = rng.sample(StandardNormal);
                level += (config.factor_drift + config.factor_sd * z).max(0.0);
            }
            f
        })
        .collect();
    let donors: Vec<UnitDraw> = (0..n).map(|_| draw_unit(&mut rng, config)).collect();
    let (treated, weights) = match &config.treated {
        TreatedDesign::Exchangeable => (draw_unit(&mut rng, config), None),
        TreatedDesign::Weights(w) => {
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            (mix(&donors, &w), Some(w))
        }
        TreatedDesign::Dirichlet { concentration } => {
            let g = Gamma::new(*concentration, 1.0).expect("validated concentration");
            let raw: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            (mix(&donors, &w), Some(w))
        }
    };

    let noise = Normal::new(0.0, config.noise_sd).expect("validated sd");
    let width = (n + 1).to_string().len();
    let names: Vec<String> = (0..n).map(|i| format!("donor{:0width$}", i + 1)).collect();
    let treated_name = "treated".to_string();
    let mut records = Vec::with_capacity((n + 1) * t_end);
    let mut statics = BTreeMap::new();
    let mut counterfactual = Vec::new();
    let mut counterfactual_mean = Vec::new();

    let units = std::iter::once((&treated_name, &treated)).chain(names.iter().zip(&donors));
    for (u, (name, draw)) in units.enumerate() {
        statics.insert(name.clone(), draw.statics);
        for t in 0..t_end {
            let m = config.level
                + draw
                    .loadings
                    .iter()
                    .zip(&factors)
                    .map(|(l, f)| l * f[t])
                    .sum::<f64>();
            let y0 = m + noise.sample(&mut rng);
            let mut y = y0;
            if u == 0 {
                counterfactual.push(y0);
                counterfactual_mean.push(m);
                if t >= config.t0 {
                    y += config.treatment_path.effect(t - config.t0);
                }
            }
            let f_sum: f64 = factors.iter().map(|f| f[t]).sum();
            let cases = 10.0
                + draw.case_level
                + draw
                    .case_loadings
                    .iter()
                    .zip(&factors)
                    .map(|(c, f)| c * f[t])
                    .sum::<f64>();
            let mobility = std::array::from_fn(|s| {
                Some(-(draw.mob_level[s] + draw.mob_loading[s] * f_sum) + noise.sample(&mut rng))
            });
            records.push(Record {
                unit: name.clone(),
                date: config.start_date + Days::new(t as u64),
                observation: Observation {
                    deaths_pm: y,
                    cases_pm: cases,
                    mobility,
                    // every unit's stringency peaks on the last day
                    stringency: Some(100.0 - (t_end - 1 - t) as f64),
                },
            });
        }
    }
    let treatment_date = config.start_date + Days::new(config.t0 as u64);
    let panel = Panel::new(records, &statics, &treated_name, treatment_date)?;
    let true_att = (0..config.t1)
        .map(|d| config.treatment_path.effect(d))
        .sum::<f64>()
        / config.t1 as f64;
    Ok(SyntheticPanel {
        panel,
        treated: treated_name,
        donors: names,
        counterfactual,
        counterfactual_mean,
        true_weights: weights,
        true_att,
        t0: config.t0,
        t_end,
    })
}
