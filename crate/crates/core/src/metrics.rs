//! Replication summaries and diagnostics: bias/SE/MSE/coverage tables,
//! empirical power, the third Prentice criterion, treatment attenuation,
//! and the Lorenz curve of covariate censoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal critical value for two-sided 95% Wald intervals.
pub const Z_975: f64 = 1.959963984540054;

/// One row of a simulation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub reps: usize,
    pub average: f64,
    /// `|average - truth|`.
    pub abs_bias: f64,
    /// Standard deviation of the estimates (divisor `reps - 1`).
    pub emp_se: f64,
    /// Mean model-based standard error.
    pub mean_se: f64,
    /// Mean of `(estimate - truth)^2`.
    pub mse: f64,
    pub coverage: f64,
}

pub fn summarize(estimates: &[f64], model_ses: &[f64], truth: f64) -> Result<SummaryRow> {
    if estimates.len() != model_ses.len() {
        return Err(Error::LengthMismatch {
            expected: estimates.len(),
            found: model_ses.len(),
        });
    }
    let reps = estimates.len();
    if reps < 2 {
        return Err(Error::InvalidConfig(format!(
            "summaries need at least 2 replicates, got {reps}"
        )));
    }
    let n = reps as f64;
    let average = estimates.iter().sum::<f64>() / n;
    let variance = estimates.iter().map(|e| (e - average).powi(2)).sum::<f64>() / (n - 1.0);
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n;
    let covered = estimates
        .iter()
        .zip(model_ses)
        .filter(|(e, se)| (*e - truth).abs() <= Z_975 * **se)
        .count();
    Ok(SummaryRow {
        reps,
        average,
        abs_bias: (average - truth).abs(),
        emp_se: variance.sqrt(),
        mean_se: model_ses.iter().sum::<f64>() / n,
        mse,
        coverage: covered as f64 / n,
    })
}

/// Fraction of p-values strictly below `level`.
pub fn empirical_power(p_values: &[f64], level: f64) -> f64 {
    if p_values.is_empty() {
        return 0.0;
    }
    p_values.iter().filter(|&&p| p < level).count() as f64 / p_values.len() as f64
}

/// Proportion of replicates where the intermediate endpoint is significant,
/// and where additionally the treatment effect is not.
pub fn prentice_check(gamma_p: &[f64], treatment_p: &[f64], level: f64) -> Result<(f64, f64)> {
    if gamma_p.len() != treatment_p.len() {
        return Err(Error::LengthMismatch {
            expected: gamma_p.len(),
            found: treatment_p.len(),
        });
    }
    if gamma_p.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = gamma_p.len() as f64;
    let significant = gamma_p.iter().filter(|&&p| p < level).count();
    let both = gamma_p
        .iter()
        .zip(treatment_p)
        .filter(|(&g, &t)| g < level && t >= level)
        .count();
    Ok((significant as f64 / n, both as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSummary {
    pub ratios: Vec<f64>,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    /// Pairs dropped because the reduced estimate was below `epsilon`.
    pub degenerate: usize,
    /// `|mean(beta_full)| / |mean(beta_reduced)|` over the kept pairs.
    pub ratio_of_means: f64,
}

pub const ATTENUATION_EPSILON: f64 = 1e-8;

/// Per-replicate `|beta_full| / |beta_reduced|` with quartiles.
pub fn treatment_attenuation(
    full: &[f64],
    reduced: &[f64],
    epsilon: f64,
) -> Result<AttenuationSummary> {
    if full.len() != reduced.len() {
        return Err(Error::LengthMismatch {
            expected: full.len(),
            found: reduced.len(),
        });
    }
    let kept: Vec<(f64, f64)> = full
        .iter()
        .zip(reduced)
        .filter(|(_, r)| r.abs() > epsilon)
        .map(|(&f, &r)| (f, r))
        .collect();
    if kept.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let mut ratios: Vec<f64> = kept.iter().map(|(f, r)| f.abs() / r.abs()).collect();
    let mean_full = kept.iter().map(|p| p.0).sum::<f64>();
    let mean_reduced = kept.iter().map(|p| p.1).sum::<f64>();
    let degenerate = full.len() - ratios.len();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let summary = AttenuationSummary {
        median: quantile(&sorted, 0.5),
        lower_quartile: quantile(&sorted, 0.25),
        upper_quartile: quantile(&sorted, 0.75),
        ratios: std::mem::take(&mut ratios),
        degenerate,
        ratio_of_means: (mean_full / mean_reduced).abs(),
    };
    Ok(summary)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cumulative share of censored covariates against the percentile of the
/// true covariate value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    /// `(percentile, cumulative share)`, starting at `(0, 0)` and ending at
    /// `(1, 1)`.
    pub points: Vec<(f64, f64)>,
}

impl LorenzCurve {
    /// Share of censoring among subjects at or below percentile `q`.
    pub fn value_at(&self, q: f64) -> f64 {
        let k = self.points.partition_point(|&(x, _)| x <= q);
        if k == 0 {
            0.0
        } else {
            self.points[k - 1].1
        }
    }

    /// Largest vertical distance from the diagonal.
    pub fn max_diagonal_deviation(&self) -> f64 {
        self.points
            .iter()
            .map(|&(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Twice the area between the diagonal and the curve.
    pub fn gini(&self) -> f64 {
        let area: f64 = self
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
            .sum();
        1.0 - 2.0 * area
    }
}

pub fn lorenz_curve(true_w: &[f64], censored: &[bool]) -> Result<LorenzCurve> {
    if true_w.len() != censored.len() {
        return Err(Error::LengthMismatch {
            expected: true_w.len(),
            found: censored.len(),
        });
    }
    let total = censored.iter().filter(|&&c| c).count();
    if total == 0 {
        return Err(Error::NoCensoring);
    }
    let n = true_w.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| true_w[a].total_cmp(&true_w[b]).then(a.cmp(&b)));
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut cumulative = 0;
    for (rank, &i) in order.iter().enumerate() {
        if censored[i] {
            cumulative += 1;
        }
        points.push((
            (rank + 1) as f64 / n as f64,
            cumulative as f64 / total as f64,
        ));
    }
    Ok(LorenzCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_summary() {
        let s = summarize(&[0.5, 0.5, 0.5], &[0.1, 0.1, 0.1], 0.5).unwrap();
        assert_eq!(s.abs_bias, 0.0);
        assert_eq!(s.emp_se, 0.0);
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.coverage, 1.0);
    }

    #[test]
    fn two_point_summary() {
        let s = summarize(&[0.0, 2.0], &[10.0, 10.0], 1.0).unwrap();
        assert_eq!(s.abs_bias, 0.0);
        assert!((s.emp_se - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.mse, 1.0);
        assert_eq!(s.coverage, 1.0);
        assert_eq!(s.mean_se, 10.0);
    }

    #[test]
    fn summary_errors() {
        assert!(matches!(
            summarize(&[1.0, 2.0], &[1.0], 0.0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(summarize(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn power_extremes() {
        assert_eq!(empirical_power(&[1.0; 10], 0.05), 0.0);
        assert_eq!(empirical_power(&[0.0; 10], 0.05), 1.0);
        assert_eq!(empirical_power(&[0.01, 0.05, 0.2, 0.04], 0.05), 0.5);
    }

    #[test]
    fn prentice_proportions() {
        assert_eq!(
            prentice_check(&[0.001; 4], &[0.5; 4], 0.05).unwrap(),
            (1.0, 1.0)
        );
        let (a, b) =
            prentice_check(&[0.01, 0.01, 0.2, 0.01], &[0.01, 0.5, 0.5, 0.3], 0.05).unwrap();
        assert_eq!(a, 0.75);
        assert_eq!(b, 0.5);
        assert!(b <= a);
    }

    #[test]
    fn attenuation_extremes() {
        let s = treatment_attenuation(&[0.4, -0.2, 0.7], &[0.4, -0.2, 0.7], ATTENUATION_EPSILON)
            .unwrap();
        assert_eq!(s.median, 1.0);
        let s = treatment_attenuation(&[0.0, 0.0], &[0.4, -0.3], ATTENUATION_EPSILON).unwrap();
        assert_eq!(s.median, 0.0);
        assert_eq!(s.ratio_of_means, 0.0);
        let s = treatment_attenuation(&[0.1, -0.1, 0.05], &[-0.5, -0.5, -0.5], ATTENUATION_EPSILON)
            .unwrap();
        assert_eq!(s.median, 0.2);
        assert!((s.ratio_of_means - 1.0 / 30.0).abs() < 1e-15);
        let err = treatment_attenuation(&[0.1], &[0.0], ATTENUATION_EPSILON).unwrap_err();
        assert_eq!(err, Error::AllDegenerate);
    }

    #[test]
    fn lorenz_concentrated_in_top_decile() {
        let w: Vec<f64> = (0..100).map(f64::from).collect();
        let censored: Vec<bool> = (0..100).map(|i| i >= 90).collect();
        let c = lorenz_curve(&w, &censored).unwrap();
        assert_eq!(c.value_at(0.9), 0.0);
        assert_eq!(c.value_at(0.95), 0.5);
        assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        assert!(c.gini() > 0.8);
    }

    #[test]
    fn lorenz_requires_censoring() {
        assert_eq!(
            lorenz_curve(&[1.0, 2.0], &[false, false]).unwrap_err(),
            Error::NoCensoring
        );
    }

    #[test]
    fn uniform_censoring_is_diagonal() {
        let w: Vec<f64> = (0..1000).map(f64::from).collect();
        let censored: Vec<bool> = (0..1000).map(|i| i % 4 == 0).collect();
        let c = lorenz_curve(&w, &censored).unwrap();
        assert!(c.max_diagonal_deviation() < 0.005);
        assert!(c.gini().abs() < 0.01);
    }
}
