use serde::{Deserialize, Serialize};

use super::RateError;

/// Microscopic jump rate `λ(k)`: an explicit table `λ(0..=K)` followed by an
/// affine tail with an optional periodic correction.
///
/// For `k > K` the rate is
/// `λ(K) + tail_slope·(k − K) + tail_pattern[(k − K) mod P]`,
/// where `P = tail_pattern.len()` and `tail_pattern[0] == 0`. An empty pattern
/// means a purely affine tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JumpRateSpec", into = "JumpRateSpec")]
pub struct JumpRate {
    name: String,
    table: Vec<f64>,
    tail_slope: f64,
    tail_pattern: Vec<f64>,
}

/// Plain key-value form of a [`JumpRate`], as read from config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpRateSpec {
    pub name: String,
    pub table: Vec<f64>,
    pub tail_slope: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail_pattern: Vec<f64>,
}

impl TryFrom<JumpRateSpec> for JumpRate {
    type Error = RateError;

    fn try_from(s: JumpRateSpec) -> Result<Self, RateError> {
        JumpRate::new(s.name, s.table, s.tail_slope, s.tail_pattern)
    }
}

impl From<JumpRate> for JumpRateSpec {
    fn from(r: JumpRate) -> Self {
        JumpRateSpec {
            name: r.name,
            table: r.table,
            tail_slope: r.tail_slope,
            tail_pattern: r.tail_pattern,
        }
    }
}

impl JumpRate {
    pub fn new(
        name: impl Into<String>,
        table: Vec<f64>,
        tail_slope: f64,
        tail_pattern: Vec<f64>,
    ) -> Result<Self, RateError> {
        let rate = JumpRate {
            name: name.into(),
            table,
            tail_slope,
            tail_pattern,
        };
        rate.validate()?;
        Ok(rate)
    }

    /// `λ(k) = k`, the independent-walker case with `φ(ρ) = ρ`.
    pub fn linear() -> Self {
        Self::new("linear", vec![0.0, 1.0], 1.0, Vec::new()).expect("valid")
    }

    /// `λ(k) = 1_{k ≥ 1}`; bounded, so it fails the spectral-gap condition.
    pub fn constant() -> Self {
        Self::new("constant", vec![0.0, 1.0], 0.0, Vec::new()).expect("valid")
    }

    /// `λ(k) = k + ½·1_{k odd}`.
    pub fn odd_bump() -> Self {
        Self::new("odd-bump", vec![0.0, 1.5, 2.0], 1.0, vec![0.0, 0.5]).expect("valid")
    }

    /// `λ(k) = min(k, cap) + slope·(k − cap)^+`, a saturating rate that
    /// still grows linearly far out.
    pub fn saturating(cap: usize, slope: f64) -> Result<Self, RateError> {
        let table = (0..=cap).map(|k| k as f64).collect();
        Self::new(format!("saturating-{cap}"), table, slope, Vec::new())
    }

    pub(crate) fn validate(&self) -> Result<(), RateError> {
        let invalid = |msg: String| Err(RateError::InvalidRate(msg));
        if self.table.len() < 2 {
            return invalid("table must list at least λ(0) and λ(1)".into());
        }
        if self.table.iter().any(|v| !v.is_finite()) {
            return invalid("table entries must be finite".into());
        }
        if self.table[0] != 0.0 {
            return invalid(format!("λ(0) must be 0, got {}", self.table[0]));
        }
        if let Some(k) = (1..self.table.len()).find(|&k| self.table[k] <= 0.0) {
            return invalid(format!("λ({k}) = {} must be positive", self.table[k]));
        }
        if !(self.tail_slope.is_finite() && self.tail_slope >= 0.0) {
            return invalid(format!("tail_slope must be ≥ 0, got {}", self.tail_slope));
        }
        if !self.tail_pattern.is_empty() {
            if self.tail_pattern[0] != 0.0 {
                return invalid("tail_pattern[0] must be 0".into());
            }
            if self.tail_pattern.iter().any(|v| !v.is_finite()) {
                return invalid("tail_pattern entries must be finite".into());
            }
            if self.tail_slope == 0.0 {
                return invalid("a periodic tail pattern requires tail_slope > 0".into());
            }
        }
        let k_max = self.table_len() - 1;
        for m in 1..=self.period() {
            let v = self.eval(k_max + m);
            if v <= 0.0 {
                return invalid(format!("λ({}) = {v} must be positive", k_max + m));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn tail_pattern(&self) -> &[f64] {
        &self.tail_pattern
    }

    /// Number of explicit entries, `K + 1`.
    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// Period of the tail correction (1 for a pure affine tail).
    pub fn period(&self) -> usize {
        self.tail_pattern.len().max(1)
    }

    /// `true` when the tail does not grow, i.e. `λ` is bounded.
    pub fn is_bounded(&self) -> bool {
        self.tail_slope == 0.0
    }

    /// Evaluates `λ(k)` for any occupancy.
    #[inline]
    pub fn eval(&self, k: usize) -> f64 {
        let k_max = self.table.len() - 1;
        if k <= k_max {
            return self.table[k];
        }
        let m = k - k_max;
        let correction = if self.tail_pattern.is_empty() {
            0.0
        } else {
            self.tail_pattern[m % self.tail_pattern.len()]
        };
        self.table[k_max] + self.tail_slope * m as f64 + correction
    }

    /// A lower bound on `inf_{j ≥ m} λ(j)`.
    pub(crate) fn inf_from(&self, m: usize) -> f64 {
        let k_max = self.table.len() - 1;
        let min_pattern = self.tail_pattern.iter().copied().fold(0.0_f64, f64::min);
        let tail_bound = |from: usize| {
            self.table[k_max] + self.tail_slope * (from - k_max) as f64 + min_pattern
        };
        if m > k_max {
            tail_bound(m)
        } else {
            self.table[m..]
                .iter()
                .copied()
                .fold(tail_bound(k_max + 1), f64::min)
        }
    }

    /// Fugacity at which the partition series stops converging; infinite for
    /// growing rates.
    pub fn critical_fugacity(&self) -> f64 {
        if self.is_bounded() {
            self.table[self.table.len() - 1]
        } else {
            f64::INFINITY
        }
    }
}

/// Outcome of scanning a rate for the Lipschitz (A1) and spectral-gap (A2)
/// conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub lipschitz_c: f64,
    pub monotone: bool,
    /// `(k, δ)` with `λ(n + k) ≥ λ(n) + δ` for every `n`.
    pub gap_pair: Option<(usize, f64)>,
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub scan_depth: usize,
}

/// Checks (A1) and (A2) by exhaustive scan of the table plus one full tail
/// period, which is exact because the tail increments are periodic.
pub fn check_assumptions(rate: &JumpRate, scan_depth: usize) -> Result<AssumptionReport, RateError> {
    rate.validate()?;
    let k_max = rate.table_len() - 1;
    if scan_depth < 2 * k_max {
        return Err(RateError::InvalidArgument(format!(
            "scan_depth {scan_depth} must be at least 2K = {}",
            2 * k_max
        )));
    }
    let period = rate.period();
    // Past k_max + period every increment repeats, so this horizon is exact.
    let horizon = (k_max + 2 * period + 1).max(scan_depth);

    let increments: Vec<f64> = (0..horizon).map(|k| rate.eval(k + 1) - rate.eval(k)).collect();
    // A chord slope is an average of consecutive increments, so the largest
    // increment is the best Lipschitz constant over all pairs k ≤ k'.
    let lipschitz_c = increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let monotone = increments.iter().all(|&d| d >= 0.0);
    let positive = (1..=horizon).all(|k| rate.eval(k) > 0.0);
    let a1_ok = positive && lipschitz_c.is_finite();

    let mut gap_pair = None;
    if monotone && !rate.is_bounded() {
        for k in 1..=scan_depth {
            // min over n of λ(n + k) − λ(n); periodic beyond the table.
            let delta = (0..=k_max + period)
                .map(|n| rate.eval(n + k) - rate.eval(n))
                .fold(f64::INFINITY, f64::min);
            if delta > 0.0 {
                gap_pair = Some((k, delta));
                break;
            }
        }
    }
    Ok(AssumptionReport {
        lipschitz_c,
        monotone,
        gap_pair,
        a1_ok,
        a2_ok: gap_pair.is_some(),
        scan_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rate_passes_both() {
        let r = check_assumptions(&JumpRate::linear(), 16).unwrap();
        assert!(r.a1_ok && r.a2_ok && r.monotone);
        assert_eq!(r.lipschitz_c, 1.0);
        assert_eq!(r.gap_pair, Some((1, 1.0)));
    }

    #[test]
    fn bounded_rate_fails_gap() {
        let r = check_assumptions(&JumpRate::constant(), 16).unwrap();
        assert!(r.a1_ok);
        assert_eq!(r.lipschitz_c, 1.0);
        assert!(!r.a2_ok);
        assert_eq!(r.gap_pair, None);
    }

    #[test]
    fn odd_bump_scan() {
        let rate = JumpRate::odd_bump();
        let expected = [0.0, 1.5, 2.0, 3.5, 4.0, 5.5, 6.0];
        for (k, &v) in expected.iter().enumerate() {
            assert_eq!(rate.eval(k), v);
        }
        let r = check_assumptions(&rate, 16).unwrap();
        assert_eq!(r.lipschitz_c, 1.5);
        assert_eq!(r.gap_pair, Some((1, 0.5)));
    }

    #[test]
    fn rejects_nonzero_origin() {
        let err = JumpRate::new("bad", vec![0.5, 1.0], 1.0, vec![]).unwrap_err();
        assert!(matches!(err, RateError::InvalidRate(_)));
    }

    #[test]
    fn rejects_shallow_scan() {
        let rate = JumpRate::saturating(5, 1.0).unwrap();
        assert!(check_assumptions(&rate, 9).is_err());
        assert!(check_assumptions(&rate, 10).is_ok());
    }

    #[test]
    fn non_monotone_rate_fails_gap() {
        let rate = JumpRate::new("dip", vec![0.0, 2.0, 1.0], 1.0, vec![]).unwrap();
        let r = check_assumptions(&rate, 8).unwrap();
        assert!(!r.monotone);
        assert!(!r.a2_ok);
        assert_eq!(r.lipschitz_c, 2.0);
    }

    #[test]
    fn inf_from_is_a_lower_bound() {
        for rate in [JumpRate::linear(), JumpRate::odd_bump(), JumpRate::constant()] {
            for m in 0..20 {
                let actual = (m..m + 50).map(|j| rate.eval(j)).fold(f64::INFINITY, f64::min);
                assert!(rate.inf_from(m) <= actual + 1e-15);
            }
        }
    }
}
