//! Data generation for the three simulation scenarios, Monte Carlo
//! calibration of censoring parameters, and replicated estimator runs.
//!
//! Scenario 1 has a uniform censored covariate, four fully observed
//! covariates, and uniform censoring of both covariate and outcome.
//! Scenario 2 has a PFS-like covariate that carries the whole treatment
//! effect on an OS-like outcome, one shared censoring time for both
//! endpoints, and some PFS events re-labelled as deaths. Scenario 3 has a
//! single censored covariate whose censoring time is Weibull, which lets
//! the inequality of covariate censoring vary at a fixed rate.

use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::comparators::{fit_complete_case, fit_conditional_mean_imputation, fit_standard_cox};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::metrics::{summarize, SummaryRow};
use crate::solver::{fit_proposed, FitOptions, FitResult};

/// Default Monte Carlo sample size for censoring calibration.
pub const CALIBRATION_MC_SIZE: usize = 1_000_000;

/// Largest accepted gap between achieved and target calibration rates.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario1 {
    pub covariate_censoring: f64,
    pub outcome_censoring: f64,
    /// `(gamma, beta_1, beta_2, beta_3, beta_4)`.
    pub truth: Vec<f64>,
    /// Pearson correlation of the two uniform covariates.
    pub x_correlation: f64,
    /// Probabilities of the three levels of the categorical covariate.
    pub x3_probabilities: [f64; 3],
}

impl Default for Scenario1 {
    fn default() -> Self {
        Self {
            covariate_censoring: 0.30,
            outcome_censoring: 0.40,
            truth: vec![LN_2, -LN_2, LN_2, 1.0, 0.0],
            x_correlation: 0.4,
            x3_probabilities: [0.1, 0.3, 0.6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario2 {
    pub pfs_mean_active: f64,
    pub pfs_mean_control: f64,
    /// `(gamma, beta)`: PFS and treatment effects on OS.
    pub truth: Vec<f64>,
    /// Fraction of PFS events turned into deaths.
    pub death_fraction: f64,
    /// Target OS censoring rate (after the death overwrite).
    pub outcome_censoring: f64,
}

impl Default for Scenario2 {
    fn default() -> Self {
        Self {
            pfs_mean_active: 1.0,
            pfs_mean_control: 0.6,
            truth: vec![-1.0 / 3.0, 0.0],
            death_fraction: 0.10,
            outcome_censoring: 0.30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario3 {
    pub weibull_scale: f64,
    pub weibull_shape: f64,
    pub covariate_censoring: f64,
    pub outcome_censoring: f64,
    /// `(gamma)`.
    pub truth: Vec<f64>,
    /// The covariate is `exp(log_mean + log_sd * N(0, 1))`.
    pub covariate_log_mean: f64,
    pub covariate_log_sd: f64,
}

impl Default for Scenario3 {
    fn default() -> Self {
        Self {
            weibull_scale: 1.0,
            weibull_shape: 0.8,
            covariate_censoring: 0.25,
            outcome_censoring: 0.25,
            truth: vec![-1.0],
            covariate_log_mean: -1.75,
            covariate_log_sd: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Scenario1(Scenario1),
    Scenario2(Scenario2),
    Scenario3(Scenario3),
}

impl Design {
    pub fn id(&self) -> u8 {
        match self {
            Design::Scenario1(_) => 1,
            Design::Scenario2(_) => 2,
            Design::Scenario3(_) => 3,
        }
    }

    pub fn truth(&self) -> &[f64] {
        match self {
            Design::Scenario1(d) => &d.truth,
            Design::Scenario2(d) => &d.truth,
            Design::Scenario3(d) => &d.truth,
        }
    }
}

/// Generator settings for one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ScenarioConfig {
    pub n: usize,
    pub seed: u64,
    pub mc_size: usize,
    pub design: Design,
}

impl ScenarioConfig {
    pub fn scenario1(n: usize, seed: u64) -> Self {
        Self::new(n, seed, Design::Scenario1(Scenario1::default()))
    }

    pub fn scenario2(n: usize, seed: u64, death_fraction: f64) -> Self {
        Self::new(
            n,
            seed,
            Design::Scenario2(Scenario2 {
                death_fraction,
                ..Scenario2::default()
            }),
        )
    }

    pub fn scenario3(n: usize, seed: u64, weibull_scale: f64, weibull_shape: f64) -> Self {
        Self::new(
            n,
            seed,
            Design::Scenario3(Scenario3 {
                weibull_scale,
                weibull_shape,
                ..Scenario3::default()
            }),
        )
    }

    pub fn new(n: usize, seed: u64, design: Design) -> Self {
        Self {
            n,
            seed,
            mc_size: CALIBRATION_MC_SIZE,
            design,
        }
    }

    pub fn scenario(&self) -> u8 {
        self.design.id()
    }

    pub fn truth(&self) -> &[f64] {
        self.design.truth()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.mc_size < 1000 {
            return bad(format!(
                "mc_size must be at least 1000, got {}",
                self.mc_size
            ));
        }
        let rate_ok = |r: f64| r > 0.0 && r < 1.0;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.design {
            Design::Scenario1(d) => {
                if !rate_ok(d.covariate_censoring) || !rate_ok(d.outcome_censoring) {
                    return bad("censoring rates must lie in (0, 1)".into());
                }
                if d.truth.len() != 5 || !finite(&d.truth) {
                    return bad("scenario 1 needs 5 finite true parameters".into());
                }
                if d.x_correlation.is_nan() || d.x_correlation.abs() >= 1.0 {
                    return bad("x_correlation must lie in (-1, 1)".into());
                }
                let total: f64 = d.x3_probabilities.iter().sum();
                if d.x3_probabilities.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return bad("x3_probabilities must be a probability vector".into());
                }
            }
            Design::Scenario2(d) => {
                if !rate_ok(d.outcome_censoring) {
                    return bad("outcome_censoring must lie in (0, 1)".into());
                }
                if !(0.0..=1.0).contains(&d.death_fraction) {
                    return bad("death_fraction must lie in [0, 1]".into());
                }
                if d.truth.len() != 2 || !finite(&d.truth) {
                    return bad("scenario 2 needs 2 finite true parameters".into());
                }
                if !(d.pfs_mean_active > 0.0 && d.pfs_mean_control > 0.0) {
                    return bad("PFS means must be positive".into());
                }
            }
            Design::Scenario3(d) => {
                if !rate_ok(d.covariate_censoring) || !rate_ok(d.outcome_censoring) {
                    return bad("censoring rates must lie in (0, 1)".into());
                }
                if d.truth.len() != 1 || !finite(&d.truth) {
                    return bad("scenario 3 needs 1 finite true parameter".into());
                }
                if !(d.weibull_scale > 0.0 && d.weibull_shape > 0.0) {
                    return bad("Weibull scale and shape must be positive".into());
                }
                if d.covariate_log_sd.is_nan()
                    || d.covariate_log_sd <= 0.0
                    || !d.covariate_log_mean.is_finite()
                {
                    return bad("covariate log-scale parameters are invalid".into());
                }
            }
        }
        Ok(())
    }
}

/// Flat JSON form of [`ScenarioConfig`]; fields not given take the
/// scenario's defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: u8,
    n: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mc_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_censoring: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome_censoring: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_correlation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x3_probabilities: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pfs_mean_active: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pfs_mean_control: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    death_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weibull_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weibull_shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_log_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_log_sd: Option<f64>,
}

impl TryFrom<RawConfig> for ScenarioConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let unexpected = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::InvalidConfig(format!(
                    "field `{field}` does not apply to scenario {}",
                    raw.scenario
                )))
            } else {
                Ok(())
            }
        };
        let design = match raw.scenario {
            1 => {
                unexpected("pfs_mean_active", raw.pfs_mean_active.is_some())?;
                unexpected("pfs_mean_control", raw.pfs_mean_control.is_some())?;
                unexpected("death_fraction", raw.death_fraction.is_some())?;
                unexpected("weibull_scale", raw.weibull_scale.is_some())?;
                unexpected("weibull_shape", raw.weibull_shape.is_some())?;
                unexpected("covariate_log_mean", raw.covariate_log_mean.is_some())?;
                unexpected("covariate_log_sd", raw.covariate_log_sd.is_some())?;
                let d = Scenario1::default();
                Design::Scenario1(Scenario1 {
                    covariate_censoring: raw.covariate_censoring.unwrap_or(d.covariate_censoring),
                    outcome_censoring: raw.outcome_censoring.unwrap_or(d.outcome_censoring),
                    truth: raw.truth.clone().unwrap_or(d.truth),
                    x_correlation: raw.x_correlation.unwrap_or(d.x_correlation),
                    x3_probabilities: raw.x3_probabilities.unwrap_or(d.x3_probabilities),
                })
            }
            2 => {
                unexpected("covariate_censoring", raw.covariate_censoring.is_some())?;
                unexpected("x_correlation", raw.x_correlation.is_some())?;
                unexpected("x3_probabilities", raw.x3_probabilities.is_some())?;
                unexpected("weibull_scale", raw.weibull_scale.is_some())?;
                unexpected("weibull_shape", raw.weibull_shape.is_some())?;
                unexpected("covariate_log_mean", raw.covariate_log_mean.is_some())?;
                unexpected("covariate_log_sd", raw.covariate_log_sd.is_some())?;
                let d = Scenario2::default();
                Design::Scenario2(Scenario2 {
                    pfs_mean_active: raw.pfs_mean_active.unwrap_or(d.pfs_mean_active),
                    pfs_mean_control: raw.pfs_mean_control.unwrap_or(d.pfs_mean_control),
                    truth: raw.truth.clone().unwrap_or(d.truth),
                    death_fraction: raw.death_fraction.unwrap_or(d.death_fraction),
                    outcome_censoring: raw.outcome_censoring.unwrap_or(d.outcome_censoring),
                })
            }
            3 => {
                unexpected("x_correlation", raw.x_correlation.is_some())?;
                unexpected("x3_probabilities", raw.x3_probabilities.is_some())?;
                unexpected("pfs_mean_active", raw.pfs_mean_active.is_some())?;
                unexpected("pfs_mean_control", raw.pfs_mean_control.is_some())?;
                unexpected("death_fraction", raw.death_fraction.is_some())?;
                let d = Scenario3::default();
                Design::Scenario3(Scenario3 {
                    weibull_scale: raw.weibull_scale.unwrap_or(d.weibull_scale),
                    weibull_shape: raw.weibull_shape.unwrap_or(d.weibull_shape),
                    covariate_censoring: raw.covariate_censoring.unwrap_or(d.covariate_censoring),
                    outcome_censoring: raw.outcome_censoring.unwrap_or(d.outcome_censoring),
                    truth: raw.truth.clone().unwrap_or(d.truth),
                    covariate_log_mean: raw.covariate_log_mean.unwrap_or(d.covariate_log_mean),
                    covariate_log_sd: raw.covariate_log_sd.unwrap_or(d.covariate_log_sd),
                })
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "scenario must be 1, 2 or 3, got {other}"
                )))
            }
        };
        let config = ScenarioConfig {
            n: raw.n,
            seed: raw.seed,
            mc_size: raw.mc_size.unwrap_or(CALIBRATION_MC_SIZE),
            design,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<ScenarioConfig> for RawConfig {
    fn from(c: ScenarioConfig) -> Self {
        let mut raw = RawConfig {
            scenario: c.scenario(),
            n: c.n,
            seed: c.seed,
            mc_size: Some(c.mc_size),
            ..RawConfig::default()
        };
        match c.design {
            Design::Scenario1(d) => {
                raw.covariate_censoring = Some(d.covariate_censoring);
                raw.outcome_censoring = Some(d.outcome_censoring);
                raw.truth = Some(d.truth);
                raw.x_correlation = Some(d.x_correlation);
                raw.x3_probabilities = Some(d.x3_probabilities);
            }
            Design::Scenario2(d) => {
                raw.pfs_mean_active = Some(d.pfs_mean_active);
                raw.pfs_mean_control = Some(d.pfs_mean_control);
                raw.truth = Some(d.truth);
                raw.death_fraction = Some(d.death_fraction);
                raw.outcome_censoring = Some(d.outcome_censoring);
            }
            Design::Scenario3(d) => {
                raw.weibull_scale = Some(d.weibull_scale);
                raw.weibull_shape = Some(d.weibull_shape);
                raw.covariate_censoring = Some(d.covariate_censoring);
                raw.outcome_censoring = Some(d.outcome_censoring);
                raw.truth = Some(d.truth);
                raw.covariate_log_mean = Some(d.covariate_log_mean);
                raw.covariate_log_sd = Some(d.covariate_log_sd);
            }
        }
        raw
    }
}

/// A base configuration expanded over one swept parameter: sample sizes
/// (scenario 1), death fractions (scenario 2), or Weibull `(scale, shape)`
/// pairs (scenario 3).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub settings: Vec<ScenarioConfig>,
    pub reps: Option<usize>,
}

impl SimulationPlan {
    /// Parses a JSON config: the [`ScenarioConfig`] fields plus optional
    /// `reps` and one sweep key (`sample_sizes`, `death_fractions`, or
    /// `weibull`).
    pub fn from_json(text: &str) -> Result<Self> {
        let invalid = |e: serde_json::Error| Error::InvalidConfig(e.to_string());
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(invalid)?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig("config must be a JSON object".into()))?;
        let reps = object
            .remove("reps")
            .map(serde_json::from_value::<usize>)
            .transpose()
            .map_err(invalid)?;
        let sample_sizes = object.remove("sample_sizes");
        let death_fractions = object.remove("death_fractions");
        let weibull = object.remove("weibull");
        let base: ScenarioConfig = serde_json::from_value(value).map_err(invalid)?;
        let sweeps = [&sample_sizes, &death_fractions, &weibull]
            .iter()
            .filter(|s| s.is_some())
            .count();
        if sweeps > 1 {
            return Err(Error::InvalidConfig(
                "at most one sweep key may be given".into(),
            ));
        }
        let with = |f: &dyn Fn(&mut ScenarioConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c.validate().map(|_| c)
        };
        let settings = match (sample_sizes, death_fractions, weibull, &base.design) {
            (Some(v), _, _, _) => serde_json::from_value::<Vec<usize>>(v)
                .map_err(invalid)?
                .into_iter()
                .map(|n| with(&|c| c.n = n))
                .collect::<Result<Vec<_>>>()?,
            (_, Some(v), _, Design::Scenario2(_)) => serde_json::from_value::<Vec<f64>>(v)
                .map_err(invalid)?
                .into_iter()
                .map(|f| {
                    with(&|c| {
                        if let Design::Scenario2(d) = &mut c.design {
                            d.death_fraction = f;
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            (_, _, Some(v), Design::Scenario3(_)) => serde_json::from_value::<Vec<(f64, f64)>>(v)
                .map_err(invalid)?
                .into_iter()
                .map(|(scale, shape)| {
                    with(&|c| {
                        if let Design::Scenario3(d) = &mut c.design {
                            d.weibull_scale = scale;
                            d.weibull_shape = shape;
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            (None, None, None, _) => vec![base],
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "sweep key does not apply to scenario {}",
                    base.scenario()
                )))
            }
        };
        if settings.is_empty() {
            return Err(Error::InvalidConfig("sweep is empty".into()));
        }
        Ok(Self { settings, reps })
    }
}

/// Bisection for a censoring parameter whose Monte Carlo censoring rate is
/// monotone in the parameter. `rate` should reuse the same random draws on
/// every call so that it is a deterministic monotone function.
///
/// The search is geometric, so the bracket must be positive.
pub fn calibrate_censoring<F: Fn(f64) -> f64>(
    rate: F,
    target: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::NonBracketing { target });
    }
    let (mut lo, mut hi) = bracket;
    assert!(lo > 0.0 && hi > lo, "bracket must be positive and ordered");
    let (rate_lo, rate_hi) = (rate(lo), rate(hi));
    let increasing = rate_hi > rate_lo;
    let (min, max) = if increasing {
        (rate_lo, rate_hi)
    } else {
        (rate_hi, rate_lo)
    };
    if target < min - CALIBRATION_TOLERANCE || target > max + CALIBRATION_TOLERANCE {
        return Err(Error::NonBracketing { target });
    }
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if (rate(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = if (rate(lo) - target).abs() <= (rate(hi) - target).abs() {
        lo
    } else {
        hi
    };
    if (rate(best) - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::NonBracketing { target });
    }
    Ok(best)
}

/// Calibrated censoring parameters of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Scenario 1: upper bound `a` of the covariate censoring uniform;
    /// scenario 3: multiplier of the Weibull censoring scale; unused in
    /// scenario 2.
    pub covariate: f64,
    /// Upper bound of the outcome censoring uniform (shared by both
    /// endpoints in scenario 2).
    pub outcome: f64,
}

/// One simulated dataset with the true values behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedReplicate {
    /// Observed data only.
    pub dataset: Dataset,
    /// True covariate values `W`.
    pub truth_w: Vec<f64>,
    /// True outcome times `T`.
    pub truth_t: Vec<f64>,
    pub covariate_censoring: f64,
    pub outcome_censoring: f64,
}

impl GeneratedReplicate {
    /// The observed data with `W` in place of `z` and every covariate marked
    /// as observed.
    pub fn full_data(&self) -> Dataset {
        let records = self
            .dataset
            .records()
            .iter()
            .zip(&self.truth_w)
            .map(|(r, &w)| SubjectRecord {
                z: w,
                eta: 1,
                ..r.clone()
            })
            .collect();
        Dataset::new(records).expect("full data inherits validity")
    }

    /// Outcome with the fully observed covariate `column` as the only
    /// regressor (used for treatment-only reduced models).
    pub fn single_covariate(&self, column: usize) -> Result<Dataset> {
        let records = self
            .dataset
            .records()
            .iter()
            .map(|r| SubjectRecord::new(r.y, r.delta, r.x[column], 1, vec![]))
            .collect();
        Dataset::new(records)
    }
}

/// Deterministic per-purpose RNG derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const CALIBRATION_STREAM: u64 = u64::MAX;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Exp1)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Latent correlation of a Gaussian copula whose uniform margins have
/// Pearson correlation `rho`.
pub fn copula_latent_correlation(rho: f64) -> f64 {
    2.0 * (PI * rho / 6.0).sin()
}

struct Scenario1Draw {
    w: f64,
    x: [f64; 4],
}

fn draw_scenario1(d: &Scenario1, latent: f64, rng: &mut ChaCha8Rng) -> Scenario1Draw {
    let w = rng.random_range(0.0..2.0);
    let n1 = normal(rng);
    let n2 = normal(rng);
    let x1 = 2.0 * std_normal_cdf(n1);
    let x2 = 2.0 * std_normal_cdf(latent * n1 + (1.0 - latent * latent).sqrt() * n2);
    let u: f64 = rng.random();
    let p = d.x3_probabilities;
    let level = if u < p[0] {
        1
    } else if u < p[0] + p[1] {
        2
    } else {
        3
    };
    Scenario1Draw {
        w,
        x: [x1, x2, f64::from(level == 2), f64::from(level == 3)],
    }
}

fn scenario1_hazard(d: &Scenario1, draw: &Scenario1Draw) -> f64 {
    let t = &d.truth;
    (t[0] * draw.w + t[1] * draw.x[0] + t[2] * draw.x[1] + t[3] * draw.x[2] + t[4] * draw.x[3])
        .exp()
}

fn scenario2_pfs(d: &Scenario2, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let trt = f64::from(rng.random_bool(0.5));
    let mean = if trt == 1.0 {
        d.pfs_mean_active
    } else {
        d.pfs_mean_control
    };
    (trt, mean * exp1(rng))
}

fn scenario3_covariate(d: &Scenario3, rng: &mut ChaCha8Rng) -> f64 {
    (d.covariate_log_mean + d.covariate_log_sd * normal(rng)).exp()
}

fn weibull_unit(shape: f64, rng: &mut ChaCha8Rng) -> f64 {
    exp1(rng).powf(1.0 / shape)
}

const BRACKET: (f64, f64) = (1e-4, 1e6);

fn fraction(flags: impl Iterator<Item = bool>, n: usize) -> f64 {
    flags.filter(|&f| f).count() as f64 / n as f64
}

/// Generates replicates for one setting; censoring parameters are
/// calibrated once on construction.
#[derive(Debug, Clone)]
pub struct Generator {
    config: ScenarioConfig,
    calibration: Calibration,
}

impl Generator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let calibration = calibrate(&config)?;
        Ok(Self {
            config,
            calibration,
        })
    }

    /// Skips calibration; `calibration` must come from a compatible setting.
    pub fn with_calibration(config: ScenarioConfig, calibration: Calibration) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            calibration,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    /// Replicate number `replicate` (0-based) of this setting.
    pub fn generate(&self, replicate: u64) -> Result<GeneratedReplicate> {
        let mut rng = stream_rng(self.config.seed, replicate);
        self.generate_n(self.config.n, &mut rng)
    }

    pub fn generate_n(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<GeneratedReplicate> {
        match &self.config.design {
            Design::Scenario1(d) => gen_scenario1(d, self.calibration, n, rng),
            Design::Scenario2(d) => gen_scenario2(d, self.calibration, n, rng),
            Design::Scenario3(d) => gen_scenario3(d, self.calibration, n, rng),
        }
    }
}

fn calibrate(config: &ScenarioConfig) -> Result<Calibration> {
    let mut rng = stream_rng(config.seed, CALIBRATION_STREAM);
    let m = config.mc_size;
    match &config.design {
        Design::Scenario1(d) => {
            let latent = copula_latent_correlation(d.x_correlation);
            let mut w = Vec::with_capacity(m);
            let mut t = Vec::with_capacity(m);
            let mut cov_u = Vec::with_capacity(m);
            let mut out_u = Vec::with_capacity(m);
            for _ in 0..m {
                let draw = draw_scenario1(d, latent, &mut rng);
                t.push(exp1(&mut rng) / scenario1_hazard(d, &draw));
                w.push(draw.w);
                cov_u.push(rng.random::<f64>());
                out_u.push(rng.random::<f64>());
            }
            let covariate = calibrate_censoring(
                |a| fraction(w.iter().zip(&cov_u).map(|(w, u)| a * u < *w), m),
                d.covariate_censoring,
                BRACKET,
            )?;
            let outcome = calibrate_censoring(
                |b| fraction(t.iter().zip(&out_u).map(|(t, u)| b * u < *t), m),
                d.outcome_censoring,
                BRACKET,
            )?;
            Ok(Calibration { covariate, outcome })
        }
        Design::Scenario2(d) => {
            let mut w = Vec::with_capacity(m);
            let mut t = Vec::with_capacity(m);
            let mut u = Vec::with_capacity(m);
            let mut pick = Vec::with_capacity(m);
            for _ in 0..m {
                let (trt, pfs) = scenario2_pfs(d, &mut rng);
                let os = exp1(&mut rng) / (d.truth[0] * pfs + d.truth[1] * trt).exp();
                w.push(pfs);
                t.push(os);
                u.push(rng.random::<f64>());
                pick.push(rng.random::<f64>() < d.death_fraction);
            }
            let os_censored = |c: f64| {
                fraction(
                    (0..m).map(|i| {
                        let cens = c * u[i];
                        let overwritten = w[i] <= cens && pick[i];
                        cens < t[i] && !overwritten
                    }),
                    m,
                )
            };
            let outcome = calibrate_censoring(os_censored, d.outcome_censoring, BRACKET)?;
            Ok(Calibration {
                covariate: f64::NAN,
                outcome,
            })
        }
        Design::Scenario3(d) => {
            let mut w = Vec::with_capacity(m);
            let mut t = Vec::with_capacity(m);
            let mut base = Vec::with_capacity(m);
            let mut out_u = Vec::with_capacity(m);
            for _ in 0..m {
                let wi = scenario3_covariate(d, &mut rng);
                t.push(exp1(&mut rng) / (d.truth[0] * wi).exp());
                w.push(wi);
                base.push(d.weibull_scale * weibull_unit(d.weibull_shape, &mut rng));
                out_u.push(rng.random::<f64>());
            }
            let covariate = calibrate_censoring(
                |k| fraction(w.iter().zip(&base).map(|(w, c)| k * c < *w), m),
                d.covariate_censoring,
                BRACKET,
            )?;
            let outcome = calibrate_censoring(
                |b| fraction(t.iter().zip(&out_u).map(|(t, u)| b * u < *t), m),
                d.outcome_censoring,
                (1e-4, 1e12),
            )?;
            Ok(Calibration { covariate, outcome })
        }
    }
}

fn assemble(
    records: Vec<SubjectRecord>,
    truth_w: Vec<f64>,
    truth_t: Vec<f64>,
) -> Result<GeneratedReplicate> {
    let n = records.len();
    let covariate_censoring = fraction(records.iter().map(|r| r.eta == 0), n);
    let outcome_censoring = fraction(records.iter().map(|r| r.delta == 0), n);
    Ok(GeneratedReplicate {
        dataset: Dataset::new(records)?,
        truth_w,
        truth_t,
        covariate_censoring,
        outcome_censoring,
    })
}

/// Scenario 1: `W ~ U(0,2)` censored by `U(0,a)`; `X1, X2 ~ U(0,2)` with
/// correlation via a Gaussian copula; `X3` categorical; exponential outcome
/// censored by `U(0,b)`.
pub fn gen_scenario1(
    d: &Scenario1,
    cal: Calibration,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedReplicate> {
    let latent = copula_latent_correlation(d.x_correlation);
    let mut records = Vec::with_capacity(n);
    let mut truth_w = Vec::with_capacity(n);
    let mut truth_t = Vec::with_capacity(n);
    for _ in 0..n {
        let draw = draw_scenario1(d, latent, rng);
        let t = exp1(rng) / scenario1_hazard(d, &draw);
        let wc = cal.covariate * rng.random::<f64>();
        let tc = cal.outcome * rng.random::<f64>();
        records.push(SubjectRecord::new(
            t.min(tc),
            u8::from(t <= tc),
            draw.w.min(wc),
            u8::from(draw.w <= wc),
            draw.x.to_vec(),
        ));
        truth_w.push(draw.w);
        truth_t.push(t);
    }
    assemble(records, truth_w, truth_t)
}

/// Scenario 2: treatment acts on OS only through PFS. One uniform censoring
/// time applies to both endpoints; a fraction of PFS events are then
/// re-labelled as deaths, overwriting OS with the PFS time.
pub fn gen_scenario2(
    d: &Scenario2,
    cal: Calibration,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedReplicate> {
    let mut records = Vec::with_capacity(n);
    let mut truth_w = Vec::with_capacity(n);
    let mut truth_t = Vec::with_capacity(n);
    for _ in 0..n {
        let (trt, pfs) = scenario2_pfs(d, rng);
        let os = exp1(rng) / (d.truth[0] * pfs + d.truth[1] * trt).exp();
        let c = cal.outcome * rng.random::<f64>();
        records.push(SubjectRecord::new(
            os.min(c),
            u8::from(os <= c),
            pfs.min(c),
            u8::from(pfs <= c),
            vec![trt],
        ));
        truth_w.push(pfs);
        truth_t.push(os);
    }
    let pfs_events: Vec<usize> = (0..n).filter(|&i| records[i].eta == 1).collect();
    let n_deaths = (d.death_fraction * pfs_events.len() as f64).ceil() as usize;
    for i in rand::seq::index::sample(rng, pfs_events.len(), n_deaths.min(pfs_events.len())) {
        let subject = pfs_events[i];
        let r = &mut records[subject];
        r.y = r.z;
        r.delta = 1;
        truth_t[subject] = r.z;
    }
    assemble(records, truth_w, truth_t)
}

/// Scenario 3: log-normal covariate censored by a Weibull time with a
/// calibrated scale multiplier; exponential outcome censored by `U(0,b)`.
pub fn gen_scenario3(
    d: &Scenario3,
    cal: Calibration,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedReplicate> {
    let mut records = Vec::with_capacity(n);
    let mut truth_w = Vec::with_capacity(n);
    let mut truth_t = Vec::with_capacity(n);
    for _ in 0..n {
        let w = scenario3_covariate(d, rng);
        let t = exp1(rng) / (d.truth[0] * w).exp();
        let wc = cal.covariate * d.weibull_scale * weibull_unit(d.weibull_shape, rng);
        let tc = cal.outcome * rng.random::<f64>();
        records.push(SubjectRecord::new(
            t.min(tc),
            u8::from(t <= tc),
            w.min(wc),
            u8::from(w <= wc),
            vec![],
        ));
        truth_w.push(w);
        truth_t.push(t);
    }
    assemble(records, truth_w, truth_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Full,
    Proposed,
    Impute,
    #[serde(rename = "cc")]
    CompleteCase,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Full,
        Method::Proposed,
        Method::Impute,
        Method::CompleteCase,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Full => "Full",
            Method::Proposed => "Proposed",
            Method::Impute => "Impute",
            Method::CompleteCase => "CC",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Some(Method::Full),
            "proposed" => Some(Method::Proposed),
            "impute" => Some(Method::Impute),
            "cc" => Some(Method::CompleteCase),
            _ => None,
        }
    }

    /// Fits this estimator. `Full` needs the true covariate values, which
    /// only a [`GeneratedReplicate`] carries; observed-data methods see
    /// `dataset` alone.
    pub fn fit_observed(self, dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
        match self {
            Method::Full => fit_standard_cox(dataset, options),
            Method::Proposed => fit_proposed(dataset, options),
            Method::Impute => fit_conditional_mean_imputation(dataset, options),
            Method::CompleteCase => fit_complete_case(dataset, options),
        }
    }

    pub fn fit_replicate(
        self,
        replicate: &GeneratedReplicate,
        options: &FitOptions,
    ) -> Result<FitResult> {
        match self {
            Method::Full => fit_standard_cox(&replicate.full_data(), options),
            other => other.fit_observed(&replicate.dataset, options),
        }
    }
}

/// Estimates and Wald statistics kept from one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub iterations: usize,
    pub excluded_subjects: usize,
    pub init_fallback: bool,
    /// Largest drop between successive log likelihoods (0 when ascent held).
    pub max_descent: f64,
}

impl From<&FitResult> for FitRecord {
    fn from(fit: &FitResult) -> Self {
        let max_descent = fit
            .loglik_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max);
        Self {
            estimates: fit.estimates(),
            standard_errors: fit.standard_errors(),
            p_values: fit.wald_p.clone(),
            iterations: fit.iterations,
            excluded_subjects: fit.excluded_subjects,
            init_fallback: fit.init_fallback,
            max_descent,
        }
    }
}

/// Fit outcome: the record, or the error code.
pub type FitOutcome = std::result::Result<FitRecord, String>;

fn record(result: Result<FitResult>) -> FitOutcome {
    result
        .as_ref()
        .map(FitRecord::from)
        .map_err(|e| e.code().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    /// One entry per requested method, in request order.
    pub fits: Vec<FitOutcome>,
    /// Scenario 2 only: outcome on treatment alone.
    pub reduced: Option<FitOutcome>,
    pub covariate_censoring: f64,
    pub outcome_censoring: f64,
}

/// Raw per-replicate results of one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRun {
    pub config: ScenarioConfig,
    pub calibration: Calibration,
    pub methods: Vec<Method>,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// Generates `reps` replicates and fits every method to each. Replicates
/// run in parallel on independent RNG streams; results are in replicate
/// order, so output is identical for any thread count.
pub fn run_replications(
    generator: &Generator,
    reps: usize,
    methods: &[Method],
    options: &FitOptions,
) -> Result<ReplicationRun> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let scenario2 = generator.config().scenario() == 2;
    let outcomes = (0..reps as u64)
        .into_par_iter()
        .map(|replicate| match generator.generate(replicate) {
            Ok(data) => ReplicateOutcome {
                replicate,
                fits: methods
                    .iter()
                    .map(|m| record(m.fit_replicate(&data, options)))
                    .collect(),
                reduced: scenario2.then(|| {
                    record(
                        data.single_covariate(0)
                            .and_then(|ds| fit_standard_cox(&ds, options)),
                    )
                }),
                covariate_censoring: data.covariate_censoring,
                outcome_censoring: data.outcome_censoring,
            },
            Err(e) => ReplicateOutcome {
                replicate,
                fits: methods.iter().map(|_| Err(e.code().to_string())).collect(),
                reduced: scenario2.then(|| Err(e.code().to_string())),
                covariate_censoring: f64::NAN,
                outcome_censoring: f64::NAN,
            },
        })
        .collect();
    Ok(ReplicationRun {
        config: generator.config().clone(),
        calibration: generator.calibration(),
        methods: methods.to_vec(),
        outcomes,
    })
}

/// Aggregated results of one method over the replicates of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reps: usize,
    pub failures: usize,
    /// One row per parameter, `None` with fewer than two successful fits.
    pub parameters: Vec<Option<SummaryRow>>,
    /// Rejection rate of `param = 0` at level 0.05, per parameter.
    pub rejection_rates: Vec<f64>,
    pub median_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub config: ScenarioConfig,
    pub calibration: Calibration,
    pub mean_covariate_censoring: f64,
    pub mean_outcome_censoring: f64,
    pub methods: Vec<MethodSummary>,
}

impl ReplicationRun {
    /// Successful fit records of `method`.
    pub fn records(&self, method: Method) -> Vec<&FitRecord> {
        let Some(k) = self.methods.iter().position(|&m| m == method) else {
            return Vec::new();
        };
        self.outcomes
            .iter()
            .filter_map(|o| o.fits[k].as_ref().ok())
            .collect()
    }

    /// Paired successful (method, reduced-model) fits.
    pub fn paired_with_reduced(&self, method: Method) -> Vec<(&FitRecord, &FitRecord)> {
        let Some(k) = self.methods.iter().position(|&m| m == method) else {
            return Vec::new();
        };
        self.outcomes
            .iter()
            .filter_map(|o| match (&o.fits[k], &o.reduced) {
                (Ok(full), Some(Ok(reduced))) => Some((full, reduced)),
                _ => None,
            })
            .collect()
    }

    pub fn summarize(&self) -> ReplicationSummary {
        let truth = self.config.truth();
        let methods = self
            .methods
            .iter()
            .map(|&method| {
                let fits = self.records(method);
                let parameters = (0..truth.len())
                    .map(|k| {
                        let est: Vec<f64> = fits.iter().map(|f| f.estimates[k]).collect();
                        let se: Vec<f64> = fits.iter().map(|f| f.standard_errors[k]).collect();
                        summarize(&est, &se, truth[k]).ok()
                    })
                    .collect();
                let rejection_rates = (0..truth.len())
                    .map(|k| {
                        let p: Vec<f64> = fits.iter().map(|f| f.p_values[k]).collect();
                        crate::metrics::empirical_power(&p, 0.05)
                    })
                    .collect();
                let mut iterations: Vec<f64> = fits.iter().map(|f| f.iterations as f64).collect();
                iterations.sort_by(f64::total_cmp);
                MethodSummary {
                    method,
                    reps: self.outcomes.len(),
                    failures: self.outcomes.len() - fits.len(),
                    parameters,
                    rejection_rates,
                    median_iterations: if iterations.is_empty() {
                        f64::NAN
                    } else {
                        crate::metrics::quantile(&iterations, 0.5)
                    },
                }
            })
            .collect();
        let mean = |f: fn(&ReplicateOutcome) -> f64| {
            let v: Vec<f64> = self
                .outcomes
                .iter()
                .map(f)
                .filter(|x| x.is_finite())
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        ReplicationSummary {
            config: self.config.clone(),
            calibration: self.calibration,
            mean_covariate_censoring: mean(|o| o.covariate_censoring),
            mean_outcome_censoring: mean(|o| o.outcome_censoring),
            methods,
        }
    }
}
