//! Newton-Raphson maximization of the log partial likelihood.
//!
//! Each iteration solves `I(theta) step = U(theta)` with a Cholesky
//! factorization of the observed information `I = -H`, then halves the step
//! while it would lower the log likelihood. Iteration stops once both the
//! change in log likelihood and the infinity-norm change in parameters drop
//! below `tol`.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::comparators::fit_complete_case;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::km::covariate_weights;
use crate::partial_likelihood::{LikelihoodEvaluation, PartialLikelihood};
use crate::relative_risk::ParameterVector;

/// Relative slack tolerated when comparing successive log likelihoods.
pub const ASCENT_SLACK: f64 = 1e-12;

/// Iterations in a row with a converged log likelihood but moving
/// parameters before the fit is declared divergent.
const STALL_LIMIT: usize = 5;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitPolicy {
    /// Start from a standard Cox fit on the subjects with observed covariate.
    #[default]
    CompleteCase,
    Zeros,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitPolicy,
    pub step_halving_max: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 100,
            init: InitPolicy::CompleteCase,
            step_halving_max: 20,
        }
    }
}

impl FitOptions {
    pub fn with_init(mut self, init: InitPolicy) -> Self {
        self.init = init;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParameterVector,
    /// Inverse observed information at the optimum.
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wald_z: Vec<f64>,
    pub wald_p: Vec<f64>,
    pub excluded_subjects: usize,
    pub n_used: usize,
    /// Log likelihood at the start and after every accepted step.
    pub loglik_trace: Vec<f64>,
    /// Infinity norm of the score at `params`.
    pub score_norm: f64,
    /// Set when the requested initialization failed and zeros were used.
    pub init_fallback: bool,
}

impl FitResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.covariance.nrows())
            .map(|k| self.covariance[(k, k)].max(0.0).sqrt())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }
}

/// Two-sided Wald test of `params[index] = 0`.
pub fn wald_test(fit: &FitResult, index: usize) -> Result<(f64, f64)> {
    let dim = fit.dim();
    if index >= dim {
        return Err(Error::ParameterIndex { index, dim });
    }
    let variance = fit.covariance[(index, index)];
    if !variance.is_finite() || variance <= 0.0 {
        return Err(Error::ZeroVariance { index });
    }
    let z = fit.params.to_vec()[index] / variance.sqrt();
    Ok((z, two_sided_p(z)))
}

pub(crate) fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Maximizes the log partial likelihood with the unified relative risk.
pub fn fit_proposed(dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    let table = covariate_weights(dataset)?;
    let problem = PartialLikelihood::new(dataset, Some(&table))?;
    let (init, fallback) = match &options.init {
        InitPolicy::CompleteCase => {
            let cc_options = options.clone().with_init(InitPolicy::Zeros);
            match fit_complete_case(dataset, &cc_options) {
                Ok(fit) => (fit.params, false),
                Err(_) => (ParameterVector::zeros(dataset.p()), true),
            }
        }
        InitPolicy::Zeros => (ParameterVector::zeros(dataset.p()), false),
        InitPolicy::Given(v) => {
            if v.len() != dataset.dim() {
                return Err(Error::LengthMismatch {
                    expected: dataset.dim(),
                    found: v.len(),
                });
            }
            (ParameterVector::from_slice(v), false)
        }
    };
    let mut fit = match newton_raphson(&problem, init, options) {
        Err(Error::NonFiniteLikelihood) if !matches!(options.init, InitPolicy::Zeros) => {
            let mut fit = newton_raphson(&problem, ParameterVector::zeros(dataset.p()), options)?;
            fit.init_fallback = true;
            fit
        }
        other => other?,
    };
    fit.init_fallback |= fallback;
    Ok(fit)
}

/// Newton-Raphson on an already assembled objective.
pub fn newton_raphson(
    problem: &PartialLikelihood<'_>,
    init: ParameterVector,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    let mut params = init;
    let mut eval = problem.evaluate(&params)?;
    let mut trace = vec![eval.value];
    let mut stalled = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        iterations += 1;
        let step = newton_direction(&eval, iterations)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.step_halving_max {
            let candidate = offset(&params, &step, scale);
            if let Ok(next) = problem.evaluate(&candidate) {
                if next.value >= eval.value - ASCENT_SLACK * (1.0 + eval.value.abs()) {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            scale *= 0.5;
        }

        let Some((candidate, next)) = accepted else {
            // No ascent along the Newton direction: we sit at the optimum up
            // to rounding, or the iteration is stuck.
            if eval.score.amax() < options.tol {
                converged = true;
                break;
            }
            return Err(Error::NonConvergence { iterations });
        };

        let delta_loglik = (next.value - eval.value).abs();
        let delta_params = step.amax() * scale;
        params = candidate;
        eval = next;
        trace.push(eval.value);

        if delta_loglik < options.tol && delta_params < options.tol {
            converged = true;
            break;
        }
        if delta_loglik < options.tol {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                return Err(Error::MonotoneLikelihood {
                    parameter: step.iamax(),
                });
            }
        } else {
            stalled = 0;
        }
    }

    if !converged {
        return Err(Error::NonConvergence { iterations });
    }

    let information = -&eval.hessian;
    let covariance =
        information
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::SingularHessian {
                iteration: iterations,
            })?;
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian {
            iteration: iterations,
        });
    }
    let theta = params.to_vec();
    let (wald_z, wald_p) = theta
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let z = t / covariance[(k, k)].sqrt();
            (z, two_sided_p(z))
        })
        .unzip();

    Ok(FitResult {
        params,
        covariance,
        loglik: eval.value,
        iterations,
        converged,
        wald_z,
        wald_p,
        excluded_subjects: problem.excluded_subjects().len(),
        n_used: problem.n_used(),
        loglik_trace: trace,
        score_norm: eval.score.amax(),
        init_fallback: false,
    })
}

fn offset(params: &ParameterVector, step: &DVector<f64>, scale: f64) -> ParameterVector {
    let theta: Vec<f64> = params
        .to_vec()
        .iter()
        .zip(step.iter())
        .map(|(t, s)| t + scale * s)
        .collect();
    ParameterVector::from_slice(&theta)
}

/// Solves `(-H) step = score`. When `-H` is not positive definite (possible
/// away from the optimum, since the censored-subject terms are not concave)
/// a growing ridge is added until the factorization succeeds.
fn newton_direction(eval: &LikelihoodEvaluation, iteration: usize) -> Result<DVector<f64>> {
    let information = -&eval.hessian;
    if information.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian { iteration });
    }
    if let Some(chol) = information.clone().cholesky() {
        return Ok(chol.solve(&eval.score));
    }
    let d = information.nrows();
    let scale = (0..d)
        .map(|k| information[(k, k)].abs())
        .fold(1.0, f64::max);
    let mut ridge = 1e-8 * scale;
    for _ in 0..30 {
        let damped = &information + DMatrix::identity(d, d) * ridge;
        if let Some(chol) = damped.cholesky() {
            return Ok(chol.solve(&eval.score));
        }
        ridge *= 10.0;
    }
    Err(Error::SingularHessian { iteration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;

    fn small() -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let records = (0..40)
            .map(|_| {
                let w: f64 = rng.random_range(0.0..2.0);
                let x: f64 = rng.random_range(0.0..1.0);
                let t = -rng.random::<f64>().ln() / (0.7 * w - 0.5 * x).exp();
                let c = rng.random_range(0.0..4.0);
                let wc = rng.random_range(0.0..3.0);
                SubjectRecord::new(
                    t.min(c),
                    u8::from(t <= c),
                    w.min(wc),
                    u8::from(w <= wc),
                    vec![x],
                )
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    #[test]
    fn converges_with_small_score() {
        let fit = fit_proposed(&small(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.score_norm < 1e-6, "score {}", fit.score_norm);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - ASCENT_SLACK * (1.0 + w[0].abs()));
        }
        let cov = &fit.covariance;
        assert!((cov - cov.transpose()).amax() < 1e-12);
    }

    #[test]
    fn init_policies_agree() {
        let a = fit_proposed(&small(), &FitOptions::default()).unwrap();
        let b = fit_proposed(
            &small(),
            &FitOptions::default().with_init(InitPolicy::Zeros),
        )
        .unwrap();
        for (x, y) in a.estimates().iter().zip(b.estimates()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn given_init_checked() {
        let err = fit_proposed(
            &small(),
            &FitOptions::default().with_init(InitPolicy::Given(vec![0.0])),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn invalid_options() {
        let options = FitOptions {
            tol: 0.0,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit_proposed(&small(), &options),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn wald_identities() {
        let mut fit = fit_proposed(&small(), &FitOptions::default()).unwrap();
        let se = fit.standard_errors()[0];
        fit.params.gamma = 0.0;
        let (z, p) = wald_test(&fit, 0).unwrap();
        assert_eq!(z, 0.0);
        assert!((p - 1.0).abs() < 1e-15);
        fit.params.gamma = 1.959963984540054 * se;
        let (_, p) = wald_test(&fit, 0).unwrap();
        assert!((p - 0.05).abs() < 1e-9);
        assert!(matches!(
            wald_test(&fit, 9),
            Err(Error::ParameterIndex { .. })
        ));
        fit.covariance[(0, 0)] = 0.0;
        assert_eq!(
            wald_test(&fit, 0).unwrap_err(),
            Error::ZeroVariance { index: 0 }
        );
    }

    #[test]
    fn max_iter_exhausted() {
        let options = FitOptions {
            max_iter: 1,
            init: InitPolicy::Zeros,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit_proposed(&small(), &options),
            Err(Error::NonConvergence { .. })
        ));
    }
}
