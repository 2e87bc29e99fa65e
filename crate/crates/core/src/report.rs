//! CSV renderings of simulation, resampling, and Lorenz results. Numbers
//! are written in Rust's shortest round-trip form, so re-parsing a value
//! gives back the same `f64`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{prentice_check, treatment_attenuation, LorenzCurve, ATTENUATION_EPSILON};
use crate::resample::ResampleStudy;
use crate::sim::{Design, Method, ReplicationRun, ReplicationSummary, ScenarioConfig};

/// Name of the column that identifies a setting within a sweep.
pub fn setting_header(scenario: u8) -> &'static str {
    match scenario {
        1 => "Sample Size",
        2 => "Death Fraction",
        _ => "Censoring Distribution",
    }
}

pub fn setting_label(config: &ScenarioConfig) -> String {
    match &config.design {
        Design::Scenario1(_) => config.n.to_string(),
        Design::Scenario2(d) => d.death_fraction.to_string(),
        Design::Scenario3(d) => format!("Weibull({}, {})", d.weibull_scale, d.weibull_shape),
    }
}

pub fn number(x: f64) -> String {
    x.to_string()
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn io(e: csv::Error) -> Error {
    Error::InvalidConfig(e.to_string())
}

/// Bias, SE, MSE, and coverage table for parameter `parameter`, one row per
/// (setting, method). Methods with fewer than two successful fits get
/// empty cells.
pub fn table_csv(summaries: &[ReplicationSummary], parameter: usize) -> Result<String> {
    let scenario = summaries.first().map_or(1, |s| s.config.scenario());
    let mut w = writer();
    w.write_record([
        setting_header(scenario),
        "Method",
        "Average",
        "Abs Bias",
        "Emp SE",
        "MSE",
        "Emp Coverage",
    ])
    .map_err(io)?;
    for s in summaries {
        let label = setting_label(&s.config);
        for m in &s.methods {
            let cells = match m.parameters.get(parameter).copied().flatten() {
                Some(r) => [r.average, r.abs_bias, r.emp_se, r.mse, r.coverage].map(number),
                None => Default::default(),
            };
            let mut row = vec![label.clone(), m.method.label().to_string()];
            row.extend(cells);
            w.write_record(&row).map_err(io)?;
        }
    }
    finish(w)
}

/// Rejection rates of `parameter = 0` at level 0.05, with failure counts.
pub fn power_csv(summaries: &[ReplicationSummary]) -> Result<String> {
    let scenario = summaries.first().map_or(1, |s| s.config.scenario());
    let mut w = writer();
    w.write_record([
        setting_header(scenario),
        "Method",
        "Parameter",
        "Rejection Rate",
        "Failures",
    ])
    .map_err(io)?;
    for s in summaries {
        let label = setting_label(&s.config);
        for m in &s.methods {
            for (k, rate) in m.rejection_rates.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    m.method.label().to_string(),
                    k.to_string(),
                    number(*rate),
                    m.failures.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    finish(w)
}

/// Surrogacy diagnostics of one scenario 2 setting and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogacyRow {
    pub death_fraction: f64,
    pub method: Method,
    pub fits: usize,
    pub gamma_significant: f64,
    pub prentice: f64,
    pub attenuation_median: f64,
    pub attenuation_lower_quartile: f64,
    pub attenuation_upper_quartile: f64,
    pub attenuation_degenerate: usize,
    pub attenuation_ratio_of_means: f64,
}

/// Prentice proportions and treatment attenuation per setting and method,
/// for scenario 2 runs.
pub fn surrogacy_rows(runs: &[ReplicationRun]) -> Result<Vec<SurrogacyRow>> {
    let mut rows = Vec::new();
    for run in runs {
        let Design::Scenario2(d) = &run.config.design else {
            return Err(Error::InvalidConfig(
                "surrogacy diagnostics need scenario 2".into(),
            ));
        };
        for &method in &run.methods {
            let pairs = run.paired_with_reduced(method);
            let gamma_p: Vec<f64> = pairs.iter().map(|(f, _)| f.p_values[0]).collect();
            let trt_p: Vec<f64> = pairs.iter().map(|(f, _)| f.p_values[1]).collect();
            let (gamma_significant, prentice) = prentice_check(&gamma_p, &trt_p, 0.05)?;
            let full: Vec<f64> = pairs.iter().map(|(f, _)| f.estimates[1]).collect();
            let reduced: Vec<f64> = pairs.iter().map(|(_, r)| r.estimates[0]).collect();
            let att = treatment_attenuation(&full, &reduced, ATTENUATION_EPSILON)?;
            rows.push(SurrogacyRow {
                death_fraction: d.death_fraction,
                method,
                fits: pairs.len(),
                gamma_significant,
                prentice,
                attenuation_median: att.median,
                attenuation_lower_quartile: att.lower_quartile,
                attenuation_upper_quartile: att.upper_quartile,
                attenuation_degenerate: att.degenerate,
                attenuation_ratio_of_means: att.ratio_of_means,
            });
        }
    }
    Ok(rows)
}

pub fn surrogacy_csv(rows: &[SurrogacyRow]) -> Result<String> {
    let mut w = writer();
    w.write_record([
        "Death Fraction",
        "Method",
        "Fits",
        "Gamma Significant",
        "Prentice",
        "Attenuation Median",
        "Attenuation Q1",
        "Attenuation Q3",
        "Attenuation Degenerate",
        "Attenuation Ratio Of Means",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            number(r.death_fraction),
            r.method.label().to_string(),
            r.fits.to_string(),
            number(r.gamma_significant),
            number(r.prentice),
            number(r.attenuation_median),
            number(r.attenuation_lower_quartile),
            number(r.attenuation_upper_quartile),
            r.attenuation_degenerate.to_string(),
            number(r.attenuation_ratio_of_means),
        ])
        .map_err(io)?;
    }
    finish(w)
}

/// Long format: one row per (subset size, method, resample).
pub fn resample_csv(study: &ResampleStudy) -> Result<String> {
    let mut w = writer();
    w.write_record([
        "subset_size",
        "method",
        "resample_id",
        "p_value",
        "converged",
    ])
    .map_err(io)?;
    for r in &study.records {
        w.write_record([
            r.subset_size.to_string(),
            r.method.label().to_string(),
            r.resample_id.to_string(),
            number(r.p_value),
            r.converged.to_string(),
        ])
        .map_err(io)?;
    }
    finish(w)
}

pub fn lorenz_csv(curve: &LorenzCurve) -> Result<String> {
    let mut w = writer();
    w.write_record(["percentile", "cumulative_share"])
        .map_err(io)?;
    for &(x, y) in &curve.points {
        w.write_record([number(x), number(y)]).map_err(io)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::lorenz_curve;

    #[test]
    fn numbers_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -std::f64::consts::LN_2,
            1e-300,
            123456789.123,
        ] {
            assert_eq!(number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn labels() {
        assert_eq!(setting_label(&ScenarioConfig::scenario1(200, 1)), "200");
        assert_eq!(
            setting_label(&ScenarioConfig::scenario2(300, 1, 0.15)),
            "0.15"
        );
        assert_eq!(
            setting_label(&ScenarioConfig::scenario3(500, 1, 1.4, 22.0)),
            "Weibull(1.4, 22)"
        );
    }

    #[test]
    fn lorenz_rows() {
        let c = lorenz_curve(&[2.0, 1.0], &[true, false]).unwrap();
        assert_eq!(
            lorenz_csv(&c).unwrap(),
            "percentile,cumulative_share\n0,0\n0.5,0\n1,1\n"
        );
    }
}
