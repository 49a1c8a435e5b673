//! Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KsError {
    #[error("sample {0} is empty")]
    EmptySample(char),
    #[error("sample {0} contains NaN")]
    NotANumber(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub significant_at_0_05: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

fn sorted(xs: &[f64], name: char) -> Result<Vec<f64>, KsError> {
    if xs.is_empty() {
        return Err(KsError::EmptySample(name));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(KsError::NotANumber(name));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Largest gap between the empirical CDFs of two sorted samples.
fn statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.0 {
        // theta-function form converges fast for small arguments
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=50 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, KsError> {
    let a = sorted(a, 'a')?;
    let b = sorted(b, 'b')?;
    let d = statistic(&a, &b);
    let (n1, n2) = (a.len(), b.len());
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let p_value = if d == 0.0 { 1.0 } else { kolmogorov_sf(ne.sqrt() * d) };
    Ok(KsResult { statistic: d, p_value, n1, n2, significant_at_0_05: p_value < SIGNIFICANCE })
}
