//! Reference estimators: the standard Cox fit with the covariate treated as
//! observed, complete-case analysis, and conditional-mean imputation.

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::km::{covariate_weights, CovariateWeightTable};
use crate::partial_likelihood::PartialLikelihood;
use crate::relative_risk::ParameterVector;
use crate::solver::{newton_raphson, FitOptions, FitResult, InitPolicy};

/// Classical Cox fit (Breslow ties) using `z` as the covariate value for
/// every subject, whatever its `eta`.
pub fn fit_standard_cox(dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let observed = dataset.with_covariate_observed();
    let problem = PartialLikelihood::new(&observed, None)?;
    let init = match &options.init {
        InitPolicy::Given(v) => {
            if v.len() != dataset.dim() {
                return Err(Error::LengthMismatch {
                    expected: dataset.dim(),
                    found: v.len(),
                });
            }
            ParameterVector::from_slice(v)
        }
        _ => ParameterVector::zeros(dataset.p()),
    };
    newton_raphson(&problem, init, options)
}

/// Standard Cox fit on the subjects whose covariate is observed.
pub fn fit_complete_case(dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let subset = dataset
        .filter(SubjectRecord::covariate_observed)
        .map_err(|_| Error::EmptySubset)?;
    let mut fit = fit_standard_cox(&subset, options)?;
    fit.excluded_subjects = dataset.len() - subset.len();
    Ok(fit)
}

/// Replaces each censored covariate value by its Kaplan-Meier weighted
/// conditional mean over larger observed values. Subjects with no larger
/// observed value are dropped; their positions are returned.
pub fn impute_censored_covariates(
    dataset: &Dataset,
    table: &CovariateWeightTable,
) -> Result<(Dataset, Vec<usize>)> {
    let mut records = Vec::with_capacity(dataset.len());
    let mut excluded = Vec::new();
    for (i, r) in dataset.records().iter().enumerate() {
        if r.covariate_observed() {
            records.push(r.clone());
            continue;
        }
        let qualifying = table.qualifying(r.z);
        if qualifying.is_empty() {
            excluded.push(i);
            continue;
        }
        let mass: f64 = qualifying.iter().map(|e| e.weight).sum();
        let mean = qualifying.iter().map(|e| e.weight * e.z).sum::<f64>() / mass;
        records.push(SubjectRecord {
            z: mean,
            eta: 1,
            ..r.clone()
        });
    }
    if records.is_empty() {
        return Err(Error::AllSubjectsExcluded);
    }
    let completed = Dataset::new(records).map_err(|e| match e {
        Error::TooFewRecords(_) | Error::NoEvents => Error::AllSubjectsExcluded,
        other => other,
    })?;
    Ok((completed, excluded))
}

/// Standard Cox fit after conditional-mean imputation of censored covariate
/// values. Standard errors are the naive completed-data ones.
pub fn fit_conditional_mean_imputation(
    dataset: &Dataset,
    options: &FitOptions,
) -> Result<FitResult> {
    let table = covariate_weights(dataset)?;
    let (completed, excluded) = impute_censored_covariates(dataset, &table)?;
    let mut fit = fit_standard_cox(&completed, options)?;
    fit.excluded_subjects = excluded.len();
    Ok(fit)
}
