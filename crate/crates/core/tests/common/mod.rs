//! Independent reference implementations shared by the integration tests.
//! Everything here is written from the model definition with direct loops,
//! without the library's risk-set index or suffix sums.

#![allow(dead_code)]

use censcov::SubjectRecord;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random records. With `ties`, times are rounded to a coarse grid.
/// `cov_censor` is the probability that a covariate is censored.
pub fn random_records(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    ties: bool,
    cov_censor: f64,
) -> Vec<SubjectRecord> {
    let grid = |v: f64| {
        if ties {
            (v * 4.0).round() / 4.0 + 0.25
        } else {
            v
        }
    };
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: f64 = rng.random_range(0.0..2.0);
            let lp = 0.5 * w + x.iter().sum::<f64>() * 0.3;
            let t = -rng.random::<f64>().ln() / lp.exp();
            let c = rng.random_range(0.0..3.0);
            let eta = u8::from(rng.random::<f64>() >= cov_censor);
            let z = if eta == 1 { w } else { w * rng.random::<f64>() };
            SubjectRecord::new(grid(t.min(c)), u8::from(t <= c), grid(z), eta, x)
        })
        .collect()
}

/// Kaplan-Meier jumps of the covariate distribution, split equally among
/// tied observed values: `(z_j, omega_j)` for every observed subject.
pub fn km_weights(records: &[SubjectRecord]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = records.iter().map(|r| r.z).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut survival = 1.0;
    let mut out = Vec::new();
    for &t in &times {
        let at_risk = records.iter().filter(|r| r.z >= t).count() as f64;
        let events = records.iter().filter(|r| r.z == t && r.eta == 1).count();
        if events == 0 {
            continue;
        }
        let next = survival * (1.0 - events as f64 / at_risk);
        let share = (survival - next) / events as f64;
        for _ in 0..events {
            out.push((t, share));
        }
        survival = next;
    }
    out
}

/// `r*` for one record, or `None` when no observed value exceeds a
/// censored covariate.
pub fn relative_risk(
    r: &SubjectRecord,
    gamma: f64,
    beta: &[f64],
    weights: &[(f64, f64)],
) -> Option<f64> {
    let lp: f64 = r.x.iter().zip(beta).map(|(x, b)| x * b).sum();
    if r.eta == 1 {
        return Some((gamma * r.z + lp).exp());
    }
    let qualifying: Vec<&(f64, f64)> = weights.iter().filter(|(z, _)| *z > r.z).collect();
    if qualifying.is_empty() {
        return None;
    }
    let num: f64 = qualifying.iter().map(|(z, w)| w * (gamma * z).exp()).sum();
    let den: f64 = qualifying.iter().map(|(_, w)| w).sum();
    Some(lp.exp() * num / den)
}

/// Log partial likelihood with Breslow ties, by direct summation over risk
/// sets `{j : y_j >= y_i}`. Subjects without a relative risk are dropped.
pub fn log_likelihood(records: &[SubjectRecord], gamma: f64, beta: &[f64]) -> f64 {
    let weights = km_weights(records);
    let risks: Vec<Option<f64>> = records
        .iter()
        .map(|r| relative_risk(r, gamma, beta, &weights))
        .collect();
    let mut total = 0.0;
    for (i, r) in records.iter().enumerate() {
        let Some(ri) = risks[i] else { continue };
        if r.delta == 0 {
            continue;
        }
        let denom: f64 = records
            .iter()
            .zip(&risks)
            .filter(|(s, risk)| s.y >= r.y && risk.is_some())
            .map(|(_, risk)| risk.unwrap())
            .sum();
        total += ri.ln() - denom.ln();
    }
    total
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[k] += h;
            minus[k] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; row `k` holds the
/// derivative with respect to `theta[k]`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
    (0..theta.len())
        .map(|k| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[k] += h;
            minus[k] -= h;
            f(&plus)
                .iter()
                .zip(f(&minus))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(floor, f64::max);
    diff / scale
}
