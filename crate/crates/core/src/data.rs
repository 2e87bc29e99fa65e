//! Dataset representation, validation, and risk-set indexing.
//!
//! Every subject carries an outcome time `y` with event flag `delta`, a
//! covariate time `z` with observation flag `eta` (the covariate is itself a
//! right-censored time-to-event quantity), and a vector `x` of fully observed
//! covariates.

use crate::error::{Error, Result};

/// One subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    /// Observed outcome time.
    pub y: f64,
    /// Outcome event indicator (1 = event, 0 = censored).
    pub delta: u8,
    /// Observed covariate time.
    pub z: f64,
    /// Covariate indicator (1 = observed, 0 = censored).
    pub eta: u8,
    /// Fully observed covariates.
    pub x: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(y: f64, delta: u8, z: f64, eta: u8, x: Vec<f64>) -> Self {
        Self {
            y,
            delta,
            z,
            eta,
            x,
        }
    }

    #[inline]
    pub fn is_event(&self) -> bool {
        self.delta == 1
    }

    #[inline]
    pub fn covariate_observed(&self) -> bool {
        self.eta == 1
    }
}

/// A validated collection of subjects sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    p: usize,
}

impl Dataset {
    /// Validates `records`; see [`validate_dataset`].
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        validate_dataset(records)
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SubjectRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dimension of the fully observed covariate vector.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of parameters (censored covariate plus `p`).
    pub fn dim(&self) -> usize {
        self.p + 1
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.is_event()).count()
    }

    pub fn n_covariate_observed(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.covariate_observed())
            .count()
    }

    /// Same subjects with the covariate treated as fully observed.
    pub fn with_covariate_observed(&self) -> Dataset {
        let records = self
            .records
            .iter()
            .map(|r| SubjectRecord {
                eta: 1,
                ..r.clone()
            })
            .collect();
        Dataset { records, p: self.p }
    }

    /// Subset of records selected by `keep`, revalidated.
    pub fn filter<F: FnMut(&SubjectRecord) -> bool>(&self, mut keep: F) -> Result<Dataset> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        if records.is_empty() {
            return Err(Error::TooFewRecords(0));
        }
        validate_with_dim(records, self.p)
    }

    /// Subset of records at the given positions, revalidated.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        validate_with_dim(records, self.p)
    }
}

/// Checks the dataset invariants and returns the validated [`Dataset`].
pub fn validate_dataset(raw_records: Vec<SubjectRecord>) -> Result<Dataset> {
    let p = raw_records.first().map(|r| r.x.len()).unwrap_or(0);
    validate_with_dim(raw_records, p)
}

fn validate_with_dim(records: Vec<SubjectRecord>, p: usize) -> Result<Dataset> {
    for (index, r) in records.iter().enumerate() {
        if r.x.len() != p {
            return Err(Error::DimensionMismatch {
                index,
                expected: p,
                found: r.x.len(),
            });
        }
        if r.delta > 1 {
            return Err(Error::IndicatorDomain {
                index,
                field: "delta",
                value: r.delta,
            });
        }
        if r.eta > 1 {
            return Err(Error::IndicatorDomain {
                index,
                field: "eta",
                value: r.eta,
            });
        }
        if !r.y.is_finite() {
            return Err(Error::NonFinite { index, field: "y" });
        }
        if !r.z.is_finite() {
            return Err(Error::NonFinite { index, field: "z" });
        }
        if r.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index, field: "x" });
        }
        if r.y < 0.0 {
            return Err(Error::NegativeTime { index, field: "y" });
        }
        if r.z < 0.0 {
            return Err(Error::NegativeTime { index, field: "z" });
        }
    }
    if records.len() < 2 {
        return Err(Error::TooFewRecords(records.len()));
    }
    if !records.iter().any(SubjectRecord::is_event) {
        return Err(Error::NoEvents);
    }
    Ok(Dataset { records, p })
}

/// Distinct event times with their tied events and risk sets.
///
/// Subjects are kept sorted by outcome time, latest first, so every risk set
/// `{j : y_j >= t}` is a prefix of [`EventIndex::order`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventIndex {
    event_times: Vec<f64>,
    events_at: Vec<Vec<usize>>,
    order: Vec<usize>,
    risk_set_len: Vec<usize>,
}

impl EventIndex {
    /// Strictly increasing distinct event times.
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    /// Subjects with an event at `event_times()[k]`.
    pub fn events_at(&self, k: usize) -> &[usize] {
        &self.events_at[k]
    }

    /// Subjects at risk at `event_times()[k]`.
    pub fn risk_set(&self, k: usize) -> &[usize] {
        &self.order[..self.risk_set_len[k]]
    }

    pub fn risk_set_size(&self, k: usize) -> usize {
        self.risk_set_len[k]
    }

    /// Indexed subjects sorted by decreasing outcome time (ties by index).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n_event_times(&self) -> usize {
        self.event_times.len()
    }
}

/// Builds the risk-set index over every record in `dataset`.
pub fn build_event_index(dataset: &Dataset) -> EventIndex {
    build_event_index_over(dataset, &vec![true; dataset.len()])
}

/// Builds the risk-set index over the records with `included[i] == true`.
///
/// Risk sets use `y_j >= t`, so censored subjects tied with an event time stay
/// at risk at that time.
pub fn build_event_index_over(dataset: &Dataset, included: &[bool]) -> EventIndex {
    let records = dataset.records();
    let mut order: Vec<usize> = (0..records.len()).filter(|&i| included[i]).collect();
    order.sort_by(|&a, &b| records[b].y.total_cmp(&records[a].y).then(a.cmp(&b)));

    let mut event_times = Vec::new();
    let mut events_at = Vec::new();
    let mut risk_set_len = Vec::new();

    let mut start = 0;
    while start < order.len() {
        let t = records[order[start]].y;
        let mut end = start;
        while end < order.len() && records[order[end]].y == t {
            end += 1;
        }
        let mut events: Vec<usize> = order[start..end]
            .iter()
            .copied()
            .filter(|&i| records[i].is_event())
            .collect();
        if !events.is_empty() {
            events.sort_unstable();
            event_times.push(t);
            events_at.push(events);
            risk_set_len.push(end);
        }
        start = end;
    }

    event_times.reverse();
    events_at.reverse();
    risk_set_len.reverse();

    EventIndex {
        event_times,
        events_at,
        order,
        risk_set_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(y: f64, delta: u8, x: Vec<f64>) -> SubjectRecord {
        SubjectRecord::new(y, delta, 1.0, 1, x)
    }

    fn times(ys: &[f64], deltas: &[u8]) -> Dataset {
        let records = ys
            .iter()
            .zip(deltas)
            .map(|(&y, &d)| rec(y, d, vec![]))
            .collect();
        Dataset::new(records).unwrap()
    }

    #[test]
    fn minimal_dataset_is_valid() {
        let ds = Dataset::new(vec![
            rec(1.0, 1, vec![0.0, 1.0]),
            rec(2.0, 0, vec![1.0, 1.0]),
            rec(3.0, 0, vec![2.0, 0.5]),
        ])
        .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.dim(), 3);
    }

    #[test]
    fn ragged_covariates_rejected() {
        let err = Dataset::new(vec![
            rec(1.0, 1, vec![0.0, 1.0]),
            rec(2.0, 1, vec![1.0, 1.0, 2.0]),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                index: 1,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn all_censored_rejected() {
        let err = Dataset::new(vec![rec(1.0, 0, vec![]), rec(2.0, 0, vec![])]).unwrap_err();
        assert_eq!(err, Error::NoEvents);
    }

    #[test]
    fn bad_values_rejected() {
        let err = Dataset::new(vec![rec(f64::NAN, 1, vec![]), rec(2.0, 1, vec![])]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0, .. }));

        let err = Dataset::new(vec![rec(1.0, 2, vec![]), rec(2.0, 1, vec![])]).unwrap_err();
        assert!(matches!(err, Error::IndicatorDomain { field: "delta", .. }));

        let mut r = rec(1.0, 1, vec![]);
        r.eta = 3;
        let err = Dataset::new(vec![r, rec(2.0, 1, vec![])]).unwrap_err();
        assert!(matches!(err, Error::IndicatorDomain { field: "eta", .. }));

        let err = Dataset::new(vec![rec(-1.0, 1, vec![]), rec(2.0, 1, vec![])]).unwrap_err();
        assert!(matches!(err, Error::NegativeTime { .. }));

        let err = Dataset::new(vec![rec(1.0, 1, vec![])]).unwrap_err();
        assert_eq!(err, Error::TooFewRecords(1));
    }

    #[test]
    fn index_without_ties() {
        let idx = build_event_index(&times(&[1.0, 2.0, 3.0], &[1, 1, 1]));
        assert_eq!(idx.event_times(), &[1.0, 2.0, 3.0]);
        let sizes: Vec<_> = (0..3).map(|k| idx.risk_set_size(k)).collect();
        assert_eq!(sizes, vec![3, 2, 1]);
    }

    #[test]
    fn index_groups_ties() {
        let idx = build_event_index(&times(&[1.0, 1.0, 2.0], &[1, 1, 1]));
        assert_eq!(idx.n_event_times(), 2);
        assert_eq!(idx.events_at(0), &[0, 1]);
        assert_eq!(idx.risk_set_size(0), 3);
        assert_eq!(idx.risk_set_size(1), 1);
    }

    #[test]
    fn censored_subject_only_in_risk_sets() {
        let idx = build_event_index(&times(&[1.0, 2.0, 3.0], &[1, 0, 1]));
        assert_eq!(idx.event_times(), &[1.0, 3.0]);
        assert_eq!(idx.risk_set_size(0), 3);
        assert_eq!(idx.risk_set_size(1), 1);
    }

    #[test]
    fn censored_tie_stays_at_risk() {
        let idx = build_event_index(&times(&[2.0, 2.0, 3.0], &[1, 0, 0]));
        assert_eq!(idx.event_times(), &[2.0]);
        let mut rs = idx.risk_set(0).to_vec();
        rs.sort();
        assert_eq!(rs, vec![0, 1, 2]);
    }

    #[test]
    fn filtered_index_skips_excluded() {
        let ds = times(&[1.0, 2.0, 3.0], &[1, 1, 1]);
        let idx = build_event_index_over(&ds, &[true, false, true]);
        assert_eq!(idx.event_times(), &[1.0, 3.0]);
        assert_eq!(idx.risk_set_size(0), 2);
    }
}
