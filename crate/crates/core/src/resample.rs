//! Hybrid resampling study on a real dataset: the treatment effect is
//! removed by shuffling (or replaced by a synthetic assignment), arm-
//! stratified subsets are drawn repeatedly, and each subset is fitted with
//! a joint model of the intermediate endpoint and treatment.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::sim::{stream_rng, Method};
use crate::solver::FitOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentHandling {
    /// Permute the existing treatment column (index into `x`).
    Shuffle { column: usize },
    /// Replace any treatment with Bernoulli(0.5) draws.
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub subset_sizes: Vec<usize>,
    pub n_resamples: usize,
    pub treatment: TreatmentHandling,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl StudyDesign {
    pub fn new(treatment: TreatmentHandling, seed: u64) -> Self {
        Self {
            subset_sizes: vec![100, 200, 500],
            n_resamples: 2000,
            treatment,
            methods: vec![Method::Proposed, Method::Impute, Method::CompleteCase],
            seed,
        }
    }
}

/// One fit of one resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub subset_size: usize,
    pub method: Method,
    pub resample_id: usize,
    /// Wald p-value of the intermediate endpoint; NaN when the fit failed.
    pub p_value: f64,
    /// Wald p-value of treatment; NaN when the fit failed.
    pub treatment_p_value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleStudy {
    /// Ordered by subset size, resample, then method.
    pub records: Vec<ResampleRecord>,
}

impl ResampleStudy {
    pub fn p_values(&self, subset_size: usize, method: Method) -> Vec<f64> {
        self.cell(subset_size, method)
            .filter(|r| r.converged)
            .map(|r| r.p_value)
            .collect()
    }

    pub fn treatment_p_values(&self, subset_size: usize, method: Method) -> Vec<f64> {
        self.cell(subset_size, method)
            .filter(|r| r.converged)
            .map(|r| r.treatment_p_value)
            .collect()
    }

    pub fn failures(&self, subset_size: usize, method: Method) -> usize {
        self.cell(subset_size, method)
            .filter(|r| !r.converged)
            .count()
    }

    fn cell(&self, subset_size: usize, method: Method) -> impl Iterator<Item = &ResampleRecord> {
        self.records
            .iter()
            .filter(move |r| r.subset_size == subset_size && r.method == method)
    }
}

const TREATMENT_STREAM: u64 = u64::MAX - 1;

fn with_x(
    records: &[SubjectRecord],
    x: impl Fn(usize, &SubjectRecord) -> Vec<f64>,
) -> Result<Dataset> {
    Dataset::new(
        records
            .iter()
            .enumerate()
            .map(|(i, r)| SubjectRecord {
                x: x(i, r),
                ..r.clone()
            })
            .collect(),
    )
}

/// Permutes column `column` of `x`; all other values are untouched.
pub fn shuffle_treatment(study: &Dataset, column: usize, seed: u64) -> Result<Dataset> {
    if column >= study.p() {
        return Err(Error::MissingColumn(format!(
            "treatment (x column {column})"
        )));
    }
    let mut labels: Vec<f64> = study.records().iter().map(|r| r.x[column]).collect();
    labels.shuffle(&mut stream_rng(seed, TREATMENT_STREAM));
    with_x(study.records(), |i, r| {
        let mut x = r.x.clone();
        x[column] = labels[i];
        x
    })
}

/// Drops `x` and attaches a Bernoulli(0.5) treatment as the only covariate.
pub fn synthesize_treatment(study: &Dataset, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, TREATMENT_STREAM);
    let labels: Vec<f64> = (0..study.len())
        .map(|_| f64::from(rng.random_bool(0.5)))
        .collect();
    with_x(study.records(), |i, _| vec![labels[i]])
}

/// Draws `size` subjects without replacement, keeping the treated share of
/// `arms` as closely as rounding allows.
pub fn stratified_subset<R: Rng>(arms: &[Vec<usize>; 2], size: usize, rng: &mut R) -> Vec<usize> {
    let total = arms[0].len() + arms[1].len();
    let treated = ((size * arms[1].len()) as f64 / total as f64).round() as usize;
    let treated = treated
        .min(arms[1].len())
        .max(size.saturating_sub(arms[0].len()));
    let mut subset: Vec<usize> = arms[0]
        .choose_multiple(rng, size - treated)
        .copied()
        .collect();
    subset.extend(arms[1].choose_multiple(rng, treated));
    subset.sort_unstable();
    subset
}

/// Applies the treatment handling, then fits the joint model of the
/// intermediate endpoint and treatment on every arm-stratified resample.
pub fn run_resample_study(
    study: &Dataset,
    design: &StudyDesign,
    options: &FitOptions,
) -> Result<ResampleStudy> {
    if design.n_resamples == 0 {
        return Err(Error::InvalidConfig(
            "n_resamples must be at least 1".into(),
        ));
    }
    if design.methods.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one method is required".into(),
        ));
    }
    if let Some(&size) = design
        .subset_sizes
        .iter()
        .find(|&&s| s > study.len() || s < 2)
    {
        return Err(Error::InvalidConfig(format!(
            "subset size {size} must lie in [2, {}]",
            study.len()
        )));
    }
    let joint = match design.treatment {
        TreatmentHandling::Shuffle { column } => {
            let shuffled = shuffle_treatment(study, column, design.seed)?;
            with_x(shuffled.records(), |_, r| vec![r.x[column]])?
        }
        TreatmentHandling::Synthesize => synthesize_treatment(study, design.seed)?,
    };
    let mut arms = [Vec::new(), Vec::new()];
    for (i, r) in joint.records().iter().enumerate() {
        match r.x[0] {
            0.0 => arms[0].push(i),
            1.0 => arms[1].push(i),
            t => {
                return Err(Error::InvalidConfig(format!(
                    "treatment must be 0 or 1, subject {i} has {t}"
                )))
            }
        }
    }

    let mut records = Vec::new();
    for (s, &size) in design.subset_sizes.iter().enumerate() {
        let cells: Vec<Vec<ResampleRecord>> = (0..design.n_resamples)
            .into_par_iter()
            .map(|resample_id| {
                let stream = ((s as u64) << 32) | resample_id as u64;
                let mut rng = stream_rng(design.seed, stream);
                let subset = joint.select(&stratified_subset(&arms, size, &mut rng));
                design
                    .methods
                    .iter()
                    .map(|&method| {
                        let fit = subset
                            .as_ref()
                            .map_err(Clone::clone)
                            .and_then(|d| method.fit_observed(d, options));
                        let (p_value, treatment_p_value, converged) = match fit {
                            Ok(f) => (f.wald_p[0], f.wald_p[1], f.converged),
                            Err(_) => (f64::NAN, f64::NAN, false),
                        };
                        ResampleRecord {
                            subset_size: size,
                            method,
                            resample_id,
                            p_value,
                            treatment_p_value,
                            converged,
                        }
                    })
                    .collect()
            })
            .collect();
        records.extend(cells.into_iter().flatten());
    }
    let study = ResampleStudy { records };
    for &size in &design.subset_sizes {
        for &method in &design.methods {
            if study.p_values(size, method).is_empty() {
                return Err(Error::EmptyCell {
                    size,
                    method: method.label().to_string(),
                });
            }
        }
    }
    Ok(study)
}
