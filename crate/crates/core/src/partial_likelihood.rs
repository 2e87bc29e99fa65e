//! Log partial likelihood with the unified relative risk, its score, and its
//! Hessian. Tied event times use the Breslow approximation: every event at a
//! tied time contributes its own term over the shared risk-set denominator.
//!
//! Risk-set sums are accumulated in one pass from the latest outcome time
//! backwards, so an evaluation costs O(n d^2) for `d` parameters.

use nalgebra::{DMatrix, DVector};

use crate::data::{build_event_index_over, Dataset, EventIndex};
use crate::error::{Error, Result};
use crate::km::CovariateWeightTable;
use crate::relative_risk::{ParameterVector, RiskTerm, SuffixMoments};

/// Value, score, and Hessian of the log partial likelihood at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEvaluation {
    pub value: f64,
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub excluded_subjects: Vec<usize>,
}

/// Log partial likelihood over one dataset.
///
/// Subjects whose covariate is censored above every observed covariate value
/// have no relative risk; they are dropped from both event terms and risk
/// sets when the objective is built.
#[derive(Debug, Clone)]
pub struct PartialLikelihood<'a> {
    dataset: &'a Dataset,
    table: Option<&'a CovariateWeightTable>,
    index: EventIndex,
    excluded: Vec<usize>,
    /// For censored subjects, the first table entry with a larger value.
    qualifying_start: Vec<usize>,
    has_censored: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Order {
    Value,
    Score,
    Hessian,
}

impl<'a> PartialLikelihood<'a> {
    /// `table` may be `None` only when every covariate is observed.
    pub fn new(dataset: &'a Dataset, table: Option<&'a CovariateWeightTable>) -> Result<Self> {
        let records = dataset.records();
        let mut included = vec![true; records.len()];
        let mut excluded = Vec::new();
        let mut qualifying_start = vec![0; records.len()];
        let mut has_censored = false;
        for (i, r) in records.iter().enumerate() {
            if r.covariate_observed() {
                continue;
            }
            let table = table.ok_or(Error::NoObservedCovariate)?;
            let start = table.first_above(r.z);
            if start == table.len() {
                included[i] = false;
                excluded.push(i);
            } else {
                qualifying_start[i] = start;
                has_censored = true;
            }
        }
        if excluded.len() == records.len() {
            return Err(Error::AllSubjectsExcluded);
        }
        let index = build_event_index_over(dataset, &included);
        if index.n_event_times() == 0 {
            return Err(Error::AllSubjectsExcluded);
        }
        Ok(Self {
            dataset,
            table,
            index,
            excluded,
            qualifying_start,
            has_censored,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn index(&self) -> &EventIndex {
        &self.index
    }

    pub fn excluded_subjects(&self) -> &[usize] {
        &self.excluded
    }

    pub fn n_used(&self) -> usize {
        self.dataset.len() - self.excluded.len()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn log_partial_likelihood(&self, params: &ParameterVector) -> Result<f64> {
        Ok(self.run(params, Order::Value)?.value)
    }

    pub fn score(&self, params: &ParameterVector) -> Result<DVector<f64>> {
        Ok(self.run(params, Order::Score)?.score)
    }

    /// Hessian of the log partial likelihood.
    pub fn hessian(&self, params: &ParameterVector) -> Result<DMatrix<f64>> {
        Ok(self.run(params, Order::Hessian)?.hessian)
    }

    /// Observed information: the negated Hessian.
    pub fn information(&self, params: &ParameterVector) -> Result<DMatrix<f64>> {
        Ok(-self.hessian(params)?)
    }

    pub fn evaluate(&self, params: &ParameterVector) -> Result<LikelihoodEvaluation> {
        self.run(params, Order::Hessian)
    }

    fn risk_terms(&self, params: &ParameterVector) -> Vec<RiskTerm> {
        let suffix = match (self.has_censored, self.table) {
            (true, Some(t)) => Some(SuffixMoments::new(t, params.gamma)),
            _ => None,
        };
        self.dataset
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let lp = params.linear_predictor(&r.x);
                if r.covariate_observed() {
                    RiskTerm {
                        log_r: params.gamma * r.z + lp,
                        z_score: r.z,
                        curvature: 0.0,
                    }
                } else if let Some(s) = &suffix {
                    let m = s.at(self.qualifying_start[i]);
                    RiskTerm {
                        log_r: m.log_m0 + lp,
                        z_score: m.mean,
                        curvature: m.second - m.mean * m.mean,
                    }
                } else {
                    RiskTerm {
                        log_r: f64::NAN,
                        z_score: f64::NAN,
                        curvature: f64::NAN,
                    }
                }
            })
            .collect()
    }

    fn run(&self, params: &ParameterVector, order: Order) -> Result<LikelihoodEvaluation> {
        let d = self.dim();
        assert_eq!(params.dim(), d, "parameter dimension mismatch");
        let records = self.dataset.records();
        let terms = self.risk_terms(params);
        let subjects = self.index.order();
        let shift = subjects
            .iter()
            .map(|&i| terms[i].log_r)
            .fold(f64::NEG_INFINITY, f64::max);

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut s2 = vec![0.0; d * d];
        let mut value = 0.0;
        let mut score = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut u = vec![0.0; d];
        let mut mean = vec![0.0; d];

        let mut added = 0;
        for k in (0..self.index.n_event_times()).rev() {
            let len = self.index.risk_set_size(k);
            for &i in &subjects[added..len] {
                let term = terms[i];
                let w = (term.log_r - shift).exp();
                s0 += w;
                if order >= Order::Score {
                    u[0] = term.z_score;
                    u[1..].copy_from_slice(&records[i].x);
                    for a in 0..d {
                        s1[a] += w * u[a];
                    }
                    if order >= Order::Hessian {
                        for a in 0..d {
                            let wa = w * u[a];
                            for b in a..d {
                                s2[a * d + b] += wa * u[b];
                            }
                        }
                        s2[0] += w * term.curvature;
                    }
                }
            }
            added = len;

            let log_s0 = shift + s0.ln();
            let events = self.index.events_at(k);
            let n_events = events.len() as f64;
            for &e in events {
                value += terms[e].log_r - log_s0;
            }
            if order >= Order::Score {
                for a in 0..d {
                    mean[a] = s1[a] / s0;
                }
                for &e in events {
                    score[0] += terms[e].z_score - mean[0];
                    for a in 1..d {
                        score[a] += records[e].x[a - 1] - mean[a];
                    }
                }
                if order >= Order::Hessian {
                    for a in 0..d {
                        for b in a..d {
                            hess[a * d + b] -= n_events * (s2[a * d + b] / s0 - mean[a] * mean[b]);
                        }
                    }
                    for &e in events {
                        hess[0] += terms[e].curvature;
                    }
                }
            }
        }

        if !value.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        for a in 0..d {
            for b in 0..a {
                hess[a * d + b] = hess[b * d + a];
            }
        }
        Ok(LikelihoodEvaluation {
            value,
            score: DVector::from_vec(score),
            hessian: DMatrix::from_row_slice(d, d, &hess),
            excluded_subjects: self.excluded.clone(),
        })
    }
}
