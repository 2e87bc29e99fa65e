//! Kaplan-Meier estimation for the censored covariate and the jump weights
//! used to average relative risks over larger observed covariate values.

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalPoint {
    pub time: f64,
    pub survival: f64,
    pub n_at_risk: usize,
    pub n_events: usize,
}

/// Product-limit curve evaluated at each distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub points: Vec<SurvivalPoint>,
}

impl SurvivalCurve {
    /// Right-continuous step function value at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.points.partition_point(|p| p.time <= t);
        if k == 0 {
            1.0
        } else {
            self.points[k - 1].survival
        }
    }

    /// Left limit `S(t-)`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let k = self.points.partition_point(|p| p.time < t);
        if k == 0 {
            1.0
        } else {
            self.points[k - 1].survival
        }
    }
}

/// Product-limit estimator. Censored observations tied with an event time are
/// counted at risk at that time.
pub fn kaplan_meier(times: &[f64], indicators: &[u8]) -> Result<SurvivalCurve> {
    if times.len() != indicators.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            found: indicators.len(),
        });
    }
    for (index, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite {
                index,
                field: "time",
            });
        }
        if t < 0.0 {
            return Err(Error::NegativeTime {
                index,
                field: "time",
            });
        }
    }
    if !indicators.contains(&1) {
        return Err(Error::NoEvents);
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut points = Vec::new();
    let mut at_risk = times.len();
    let mut survival = 1.0;
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start;
        let mut events = 0;
        while end < order.len() && times[order[end]] == t {
            if indicators[order[end]] == 1 {
                events += 1;
            }
            end += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
            points.push(SurvivalPoint {
                time: t,
                survival,
                n_at_risk: at_risk,
                n_events: events,
            });
        }
        at_risk -= end - start;
        start = end;
    }
    Ok(SurvivalCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    pub z: f64,
    pub weight: f64,
    pub subject: usize,
}

/// Observed covariate values with their Kaplan-Meier jump weights, sorted by
/// `z` ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateWeightTable {
    entries: Vec<WeightEntry>,
    total_mass: f64,
}

impl CovariateWeightTable {
    /// Builds a table directly from entries; they are re-sorted by `z`.
    pub fn from_entries(mut entries: Vec<WeightEntry>) -> Self {
        entries.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.subject.cmp(&b.subject)));
        let total_mass = entries.iter().map(|e| e.weight).sum();
        Self {
            entries,
            total_mass,
        }
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Position of the first entry with `z_j > z`.
    pub fn first_above(&self, z: f64) -> usize {
        self.entries.partition_point(|e| e.z <= z)
    }

    /// Entries with `z_j > z`.
    pub fn qualifying(&self, z: f64) -> &[WeightEntry] {
        &self.entries[self.first_above(z)..]
    }

    /// Same table with every weight multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| WeightEntry {
                weight: e.weight * factor,
                ..*e
            })
            .collect();
        Self {
            entries,
            total_mass: self.total_mass * factor,
        }
    }

    /// Same table with `shift` added to every covariate value.
    pub fn shifted(&self, shift: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| WeightEntry {
                z: e.z + shift,
                ..*e
            })
            .collect();
        Self {
            entries,
            total_mass: self.total_mass,
        }
    }
}

/// Kaplan-Meier jump weights `S(z-) - S(z)` for every subject with an observed
/// covariate. A jump shared by tied observed values is split equally among
/// them.
pub fn covariate_weights(dataset: &Dataset) -> Result<CovariateWeightTable> {
    let records = dataset.records();
    if dataset.n_covariate_observed() == 0 {
        return Err(Error::NoObservedCovariate);
    }
    let z: Vec<f64> = records.iter().map(|r| r.z).collect();
    let eta: Vec<u8> = records.iter().map(|r| r.eta).collect();
    let curve = kaplan_meier(&z, &eta)?;

    let mut entries = Vec::with_capacity(dataset.n_covariate_observed());
    let mut previous = 1.0;
    let mut observed: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].covariate_observed())
        .collect();
    observed.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));

    let mut k = 0;
    for point in &curve.points {
        let jump = previous - point.survival;
        let share = jump / point.n_events as f64;
        for _ in 0..point.n_events {
            let subject = observed[k];
            debug_assert_eq!(z[subject], point.time);
            entries.push(WeightEntry {
                z: point.time,
                weight: share,
                subject,
            });
            k += 1;
        }
        previous = point.survival;
    }
    Ok(CovariateWeightTable::from_entries(entries))
}
