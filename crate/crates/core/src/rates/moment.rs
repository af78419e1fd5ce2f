use serde::{Deserialize, Serialize};

use super::equilibrium::series;
use super::{JumpRate, RateError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFunction {
    /// `w(x) = x·log(1+x)`.
    #[default]
    XLogOnePlusX,
    /// `w(x) = x²`.
    Square,
}

/// Convex superlinear weight `w` and exponent `θ` for `E[e^{θ w(η(0))}]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentWeight {
    #[serde(default)]
    pub w: WeightFunction,
    pub theta: f64,
}

impl Default for MomentWeight {
    fn default() -> Self {
        MomentWeight { w: WeightFunction::XLogOnePlusX, theta: 0.5 }
    }
}

impl MomentWeight {
    pub fn eval(&self, x: f64) -> f64 {
        match self.w {
            WeightFunction::XLogOnePlusX => x * x.ln_1p(),
            WeightFunction::Square => x * x,
        }
    }

    /// Sampled shape check: nonnegative second differences on `0..n` and
    /// `w(x)/x` nondecreasing from 1 on.
    pub fn shape_ok(&self, n: usize) -> bool {
        let w: Vec<f64> = (0..=n).map(|k| self.eval(k as f64)).collect();
        let convex = w.windows(3).all(|t| t[2] - 2.0 * t[1] + t[0] >= -1e-12);
        let ratio = (1..=n).map(|k| w[k] / k as f64).collect::<Vec<_>>();
        convex && ratio.windows(2).all(|r| r[1] >= r[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentStatus {
    Certified,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub theta: f64,
    pub status: MomentStatus,
    pub estimate: Option<f64>,
    /// Relative bound on the omitted tail of the moment series.
    pub tail_bound: Option<f64>,
    pub truncation: Option<usize>,
    /// Largest `θ` on the dyadic scan `2, 1, ½, …, 2⁻²⁰` that certifies.
    pub max_certified_theta: Option<f64>,
}

const SCAN_FLOOR: i32 = 20;
const MAX_TERMS: usize = 1 << 20;

/// Estimates `E_{ν}[e^{θ w(η(0))}]` at fugacity `φ` with a certified tail.
///
/// Certification needs a ratio envelope: for `w = x·log(1+x)` the increment
/// `w(j+1) − w(j)` is at most `log(2+j) + 1`, so against an affine rate tail
/// `b + s·j` the term ratio is bounded by
/// `r(j) = φ·e^θ·(2+j)^θ/(b + s·j)`, which is nonincreasing once
/// `j ≥ (θb − 2s)/(s(1−θ))` whenever `θ < 1`. Other cases are reported
/// inconclusive.
pub fn moment_check(rate: &JumpRate, fugacity: f64, weight: &MomentWeight) -> Result<MomentReport, RateError> {
    if !(weight.theta >= 0.0 && weight.theta.is_finite()) {
        return Err(RateError::InvalidArgument(format!("θ must be ≥ 0, got {}", weight.theta)));
    }
    let base = series(rate, fugacity, 1e-15)?;
    let log_z = base.sum.ln();
    let at = |theta: f64| certify(rate, fugacity, weight.w, theta, log_z);
    let max_certified_theta = (-1..=SCAN_FLOOR)
        .map(|j| 0.5f64.powi(j))
        .find(|&t| at(t).is_some());
    Ok(match at(weight.theta) {
        Some((estimate, tail, n)) => MomentReport {
            theta: weight.theta,
            status: MomentStatus::Certified,
            estimate: Some(estimate),
            tail_bound: Some(tail),
            truncation: Some(n),
            max_certified_theta,
        },
        None => MomentReport {
            theta: weight.theta,
            status: MomentStatus::Inconclusive,
            estimate: None,
            tail_bound: None,
            truncation: None,
            max_certified_theta,
        },
    })
}

fn certify(rate: &JumpRate, phi: f64, w: WeightFunction, theta: f64, log_z: f64) -> Option<(f64, f64, usize)> {
    if theta == 0.0 {
        return Some((1.0, 0.0, 0));
    }
    if phi == 0.0 {
        return Some((1.0, 0.0, 0));
    }
    if w != WeightFunction::XLogOnePlusX || rate.is_bounded() || theta >= 1.0 {
        return None;
    }
    let weight = MomentWeight { w, theta };
    let k_max = rate.table_len() - 1;
    let s = rate.tail_slope();
    let min_pattern = rate.tail_pattern().iter().copied().fold(0.0_f64, f64::min);
    // λ(j+1) ≥ b + s·j for j ≥ K.
    let b = rate.eval(k_max) - s * k_max as f64 + min_pattern + s;
    let monotone_from = ((theta * b - 2.0 * s) / (s * (1.0 - theta))).ceil().max(0.0) as usize;
    let start = monotone_from.max(k_max);
    let envelope = |j: usize| {
        let denom = b + s * j as f64;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            phi * theta.exp() * (2.0 + j as f64).powf(theta) / denom
        }
    };

    // log u_k = log t_k + θ w(k) − log Z, summed with a running maximum.
    let mut log_t = 0.0;
    let mut logs = vec![-log_z];
    for k in 1..MAX_TERMS {
        log_t += (phi / rate.eval(k)).ln();
        let lu = log_t + theta * weight.eval(k as f64) - log_z;
        logs.push(lu);
        if k >= start {
            let r = envelope(k);
            if r < 1.0 {
                let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
                let tail = (lu - peak).exp() * r / (1.0 - r);
                if tail <= 1e-12 * sum {
                    return Some((peak.exp() * sum, tail / sum, k));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_zero_is_one() {
        let w = MomentWeight { w: WeightFunction::Square, theta: 0.0 };
        let r = moment_check(&JumpRate::constant(), 0.9, &w).unwrap();
        assert_eq!(r.estimate, Some(1.0));
        assert_eq!(r.status, MomentStatus::Certified);
    }

    #[test]
    fn poisson_xlog_certified() {
        let w = MomentWeight { w: WeightFunction::XLogOnePlusX, theta: 0.5 };
        let r = moment_check(&JumpRate::linear(), 1.0, &w).unwrap();
        assert_eq!(r.status, MomentStatus::Certified);
        // Oracle: direct Poisson(1) sum with factorials.
        let mut oracle = 0.0;
        let mut p = (-1.0f64).exp();
        for k in 0..200 {
            if k > 0 {
                p /= k as f64;
            }
            oracle += p * (0.5 * k as f64 * (k as f64).ln_1p()).exp();
        }
        let est = r.estimate.unwrap();
        assert!((est - oracle).abs() < 1e-10 * oracle, "{est} vs {oracle}");
        assert_eq!(r.max_certified_theta, Some(0.5));
    }

    #[test]
    fn geometric_square_inconclusive() {
        let w = MomentWeight { w: WeightFunction::Square, theta: 0.1 };
        let r = moment_check(&JumpRate::constant(), 0.9, &w).unwrap();
        assert_eq!(r.status, MomentStatus::Inconclusive);
        assert_eq!(r.max_certified_theta, None);
    }

    #[test]
    fn weights_have_expected_shape() {
        assert!(MomentWeight::default().shape_ok(100));
        assert!(MomentWeight { w: WeightFunction::Square, theta: 1.0 }.shape_ok(100));
    }
}
