//! Unified relative risk for subjects whose covariate may be censored.
//!
//! For an observed covariate the relative risk is `exp(gamma z + beta'x)`.
//! For a covariate censored at `z_i` the factor `exp(gamma W)` is replaced by
//! its Kaplan-Meier weighted average over the observed values `z_j > z_i`.
//! All averages are computed after factoring out the largest exponent so
//! that large `|gamma|` does not overflow.

use nalgebra::{DMatrix, DVector};

use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::km::CovariateWeightTable;

/// Log hazard ratios: `gamma` for the censored covariate, `beta` for the
/// fully observed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub gamma: f64,
    pub beta: Vec<f64>,
}

impl ParameterVector {
    pub fn new(gamma: f64, beta: Vec<f64>) -> Self {
        Self { gamma, beta }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            gamma: 0.0,
            beta: vec![0.0; p],
        }
    }

    /// Unpacks `[gamma, beta...]`.
    pub fn from_slice(theta: &[f64]) -> Self {
        Self {
            gamma: theta[0],
            beta: theta[1..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.gamma);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.is_finite() && self.beta.iter().all(|b| b.is_finite())
    }

    pub(crate) fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// Weighted averages of `exp(gamma z_j) z_j^k`, `k = 0, 1, 2`, over the
/// observed covariate values exceeding a censored value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Same moments in overflow-safe form: `log m0`, `m1/m0`, `m2/m0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ScaledMoments {
    pub log_m0: f64,
    pub mean: f64,
    pub second: f64,
}

impl ScaledMoments {
    fn unscaled(self) -> ConditionalMoments {
        let m0 = self.log_m0.exp();
        ConditionalMoments {
            m0,
            m1: m0 * self.mean,
            m2: m0 * self.second,
        }
    }
}

fn scaled_moments(z_i: f64, gamma: f64, table: &CovariateWeightTable) -> Result<ScaledMoments> {
    let qualifying = table.qualifying(z_i);
    if qualifying.is_empty() {
        return Err(Error::EmptyQualifyingSet { z: z_i });
    }
    let shift = qualifying
        .iter()
        .map(|e| gamma * e.z)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2, mut mass) = (0.0, 0.0, 0.0, 0.0);
    for e in qualifying {
        let t = e.weight * (gamma * e.z - shift).exp();
        s0 += t;
        s1 += t * e.z;
        s2 += t * e.z * e.z;
        mass += e.weight;
    }
    Ok(ScaledMoments {
        log_m0: shift + (s0 / mass).ln(),
        mean: s1 / s0,
        second: s2 / s0,
    })
}

/// Weighted moments over `{j : eta_j = 1, z_j > z_i}`.
pub fn conditional_moments(
    z_i: f64,
    gamma: f64,
    table: &CovariateWeightTable,
) -> Result<ConditionalMoments> {
    scaled_moments(z_i, gamma, table).map(ScaledMoments::unscaled)
}

/// Per-subject quantities needed by the likelihood: `log r*`, the
/// covariate-time component of `grad r* / r*`, and the extra curvature
/// `m2/m0 - (m1/m0)^2` carried by censored subjects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RiskTerm {
    pub log_r: f64,
    pub z_score: f64,
    pub curvature: f64,
}

fn risk_term(
    record: &SubjectRecord,
    params: &ParameterVector,
    table: &CovariateWeightTable,
) -> Result<RiskTerm> {
    let lp = params.linear_predictor(&record.x);
    if record.covariate_observed() {
        Ok(RiskTerm {
            log_r: params.gamma * record.z + lp,
            z_score: record.z,
            curvature: 0.0,
        })
    } else {
        let m = scaled_moments(record.z, params.gamma, table)?;
        Ok(RiskTerm {
            log_r: m.log_m0 + lp,
            z_score: m.mean,
            curvature: m.second - m.mean * m.mean,
        })
    }
}

/// `r*_i`, always positive.
pub fn relative_risk(
    record: &SubjectRecord,
    params: &ParameterVector,
    table: &CovariateWeightTable,
) -> Result<f64> {
    Ok(risk_term(record, params, table)?.log_r.exp())
}

/// Gradient of `r*_i` with respect to `(gamma, beta)`.
pub fn relative_risk_gradient(
    record: &SubjectRecord,
    params: &ParameterVector,
    table: &CovariateWeightTable,
) -> Result<DVector<f64>> {
    let term = risk_term(record, params, table)?;
    let r = term.log_r.exp();
    let mut g = DVector::zeros(params.dim());
    g[0] = r * term.z_score;
    for (k, &v) in record.x.iter().enumerate() {
        g[k + 1] = r * v;
    }
    Ok(g)
}

/// Hessian of `r*_i` with respect to `(gamma, beta)`.
pub fn relative_risk_hessian(
    record: &SubjectRecord,
    params: &ParameterVector,
    table: &CovariateWeightTable,
) -> Result<DMatrix<f64>> {
    let term = risk_term(record, params, table)?;
    let r = term.log_r.exp();
    let d = params.dim();
    let mut u = DVector::zeros(d);
    u[0] = term.z_score;
    for (k, &v) in record.x.iter().enumerate() {
        u[k + 1] = v;
    }
    let mut h = &u * u.transpose() * r;
    h[(0, 0)] += r * term.curvature;
    Ok(h)
}

/// Suffix moments of the weight table for one value of `gamma`.
///
/// Entry `k` summarizes the table entries `k..`; a censored subject whose
/// qualifying set starts at `k` reads its moments in O(1).
#[derive(Debug, Clone)]
pub(crate) struct SuffixMoments {
    moments: Vec<ScaledMoments>,
}

impl SuffixMoments {
    pub fn new(table: &CovariateWeightTable, gamma: f64) -> Self {
        let entries = table.entries();
        let mut moments = vec![
            ScaledMoments {
                log_m0: f64::NAN,
                mean: f64::NAN,
                second: f64::NAN,
            };
            entries.len() + 1
        ];
        let mut shift = f64::NEG_INFINITY;
        let (mut s0, mut s1, mut s2, mut mass) = (0.0, 0.0, 0.0, 0.0);
        for k in (0..entries.len()).rev() {
            let e = entries[k];
            let a = gamma * e.z;
            if a > shift {
                let scale = (shift - a).exp();
                s0 *= scale;
                s1 *= scale;
                s2 *= scale;
                shift = a;
            }
            let t = e.weight * (a - shift).exp();
            s0 += t;
            s1 += t * e.z;
            s2 += t * e.z * e.z;
            mass += e.weight;
            moments[k] = ScaledMoments {
                log_m0: shift + (s0 / mass).ln(),
                mean: s1 / s0,
                second: s2 / s0,
            };
        }
        Self { moments }
    }

    pub fn at(&self, start: usize) -> ScaledMoments {
        self.moments[start]
    }
}
