use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{JumpRate, RateError};

const MAX_TERMS: usize = 1 << 22;

/// Truncated partition series `Σ_k φ^k / Π_{l≤k} λ(l)`.
#[derive(Clone, Debug)]
pub(crate) struct Series {
    /// Unnormalised weights `t_k`.
    pub terms: Vec<f64>,
    pub sum: f64,
    /// Bound on `Σ_{j>K} j²·t_j`, which also bounds the omitted mass and mean.
    pub tail: f64,
}

pub(crate) fn series(rate: &JumpRate, fugacity: f64, tol: f64) -> Result<Series, RateError> {
    if !(fugacity.is_finite() && fugacity >= 0.0) {
        return Err(RateError::InvalidArgument(format!("fugacity must be ≥ 0, got {fugacity}")));
    }
    if !(tol > 0.0) {
        return Err(RateError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let critical = rate.critical_fugacity();
    if fugacity >= critical {
        return Err(RateError::Divergent { fugacity, critical });
    }
    let mut terms = vec![1.0];
    let mut sum = 1.0;
    if fugacity == 0.0 {
        return Ok(Series { terms, sum, tail: 0.0 });
    }
    let mut k = 0usize;
    loop {
        k += 1;
        let t = terms[k - 1] * fugacity / rate.eval(k);
        if !t.is_finite() {
            return Err(RateError::Overflow(format!("partition term {k} overflowed at fugacity {fugacity}")));
        }
        terms.push(t);
        sum += t;
        let n = k as f64;
        // Ratio bound for every later term, inflated so that it also controls
        // the second-moment tail.
        let q = fugacity / rate.inf_from(k + 1);
        let q2 = (1.0 + 1.0 / n).powi(2) * q;
        if q2 < 1.0 {
            let tail = t * n * n * q2 / (1.0 - q2);
            if tail <= tol * sum {
                return Ok(Series { terms, sum, tail });
            }
        }
        if k >= MAX_TERMS {
            return Err(RateError::Divergent { fugacity, critical });
        }
    }
}

/// Value of the partition function with the truncation that achieved it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    pub z_value: f64,
    pub truncation: usize,
    /// Relative bound on the omitted part of the series.
    pub tail_bound: f64,
}

/// `Z(φ)` to relative accuracy `tol`.
pub fn partition_z(rate: &JumpRate, fugacity: f64, tol: f64) -> Result<PartitionValue, RateError> {
    let s = series(rate, fugacity, tol)?;
    Ok(PartitionValue {
        z_value: s.sum,
        truncation: s.terms.len() - 1,
        tail_bound: s.tail / s.sum,
    })
}

/// Invariant single-site law at a given fugacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumLaw {
    pub fugacity: f64,
    pub truncation: usize,
    pub pmf: Vec<f64>,
    pub z_value: f64,
    pub mean: f64,
    pub variance: f64,
    pub tail_bound: f64,
}

impl EquilibriumLaw {
    pub fn at_fugacity(rate: &JumpRate, fugacity: f64, tol: f64) -> Result<Self, RateError> {
        let s = series(rate, fugacity, tol)?;
        let pmf: Vec<f64> = s.terms.iter().map(|t| t / s.sum).collect();
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
        Ok(EquilibriumLaw {
            fugacity,
            truncation: pmf.len() - 1,
            pmf,
            z_value: s.sum,
            mean,
            variance: (second - mean * mean).max(0.0),
            tail_bound: s.tail / s.sum,
        })
    }

    pub fn at_density(rate: &JumpRate, density: f64, tol: f64) -> Result<Self, RateError> {
        let phi = fugacity_of_density(rate, density, tol)?;
        Self::at_fugacity(rate, phi, series_tol(tol))
    }

    /// `E[λ(η(0))]` under this law.
    pub fn mean_rate(&self, rate: &JumpRate) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| rate.eval(k) * p).sum()
    }

    /// `E[F(η(0))]` for an arbitrary function of the occupancy.
    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| f(k) * p).sum()
    }

    pub(crate) fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}

/// Inverse-CDF draw from a cumulative table.
#[inline]
pub(crate) fn draw<R: Rng>(cdf: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let k = cdf.partition_point(|&c| c <= u);
    k.min(cdf.len() - 1) as u32
}

/// `n_sites` i.i.d. draws from the law.
pub fn sample_equilibrium(law: &EquilibriumLaw, n_sites: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf = law.cdf();
    (0..n_sites).map(|_| draw(&cdf, &mut rng)).collect()
}

/// Mean density `ρ(φ)`.
pub fn mean_density(rate: &JumpRate, fugacity: f64, tol: f64) -> Result<f64, RateError> {
    Ok(EquilibriumLaw::at_fugacity(rate, fugacity, tol)?.mean)
}

/// Series tolerance used when a density tolerance is requested.
pub(crate) fn series_tol(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-15, 1e-10)
}

/// Inverts `ρ(φ)` by bracketed bisection with Newton steps, then checks that
/// `E[λ(η(0))]` reproduces the fugacity.
pub fn fugacity_of_density(rate: &JumpRate, density: f64, tol: f64) -> Result<f64, RateError> {
    if !(density.is_finite() && density >= 0.0) {
        return Err(RateError::InvalidArgument(format!("density must be ≥ 0, got {density}")));
    }
    if density == 0.0 {
        return Ok(0.0);
    }
    let stol = series_tol(tol);
    let eval = |phi: f64| EquilibriumLaw::at_fugacity(rate, phi, stol);

    let mut lo = 0.0;
    let mut hi;
    let mut law_hi;
    if rate.is_bounded() {
        let critical = rate.critical_fugacity();
        let mut m = 1;
        loop {
            hi = critical * (1.0 - 0.5f64.powi(m));
            law_hi = eval(hi)?;
            if law_hi.mean >= density {
                break;
            }
            if m >= 50 {
                return Err(RateError::OutOfRange { density, sup_density: law_hi.mean });
            }
            lo = hi;
            m += 1;
        }
    } else {
        hi = density.max(rate.eval(1));
        loop {
            law_hi = eval(hi)?;
            if law_hi.mean >= density {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
    }

    let mut x = hi;
    let mut law = law_hi;
    let mut converged = false;
    for _ in 0..60 {
        let f = law.mean - density;
        if f.abs() <= tol {
            converged = true;
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = law.variance / x;
        let newton = x - f / slope;
        x = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        law = eval(x)?;
    }
    if !converged && (law.mean - density).abs() > tol {
        return Err(RateError::NoConvergence(format!(
            "fugacity search for ρ = {density} stalled at |ρ(φ) − ρ| = {:e}",
            (law.mean - density).abs()
        )));
    }
    let cov = law.mean_rate(rate);
    if (cov - x).abs() > tol * x.max(1.0) {
        return Err(RateError::Inconsistent(format!(
            "E[λ(η)] = {cov} differs from φ = {x} at ρ = {density}"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_closed_forms() {
        let lin = JumpRate::linear();
        assert_eq!(partition_z(&lin, 0.0, 1e-12).unwrap().z_value, 1.0);
        let z = partition_z(&lin, 1.0, 1e-14).unwrap().z_value;
        assert!((z - std::f64::consts::E).abs() < 1e-13);
        let z = partition_z(&JumpRate::constant(), 0.5, 1e-14).unwrap().z_value;
        assert!((z - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bounded_rate_diverges_at_critical() {
        match partition_z(&JumpRate::constant(), 1.0, 1e-10) {
            Err(RateError::Divergent { critical, .. }) => assert_eq!(critical, 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn densities_match_closed_forms() {
        let lin = JumpRate::linear();
        assert!((mean_density(&lin, 2.0, 1e-14).unwrap() - 2.0).abs() < 1e-12);
        let geo = JumpRate::constant();
        assert!((mean_density(&geo, 0.5, 1e-14).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mean_density(&JumpRate::odd_bump(), 0.0, 1e-14).unwrap(), 0.0);
    }

    #[test]
    fn fugacity_inversion() {
        let lin = JumpRate::linear();
        assert!((fugacity_of_density(&lin, 3.7, 1e-12).unwrap() - 3.7).abs() < 1e-11);
        let geo = JumpRate::constant();
        assert!((fugacity_of_density(&geo, 1.0, 1e-12).unwrap() - 0.5).abs() < 1e-11);
        assert_eq!(fugacity_of_density(&geo, 0.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn geometric_variance_from_pmf() {
        let law = EquilibriumLaw::at_fugacity(&JumpRate::constant(), 0.5, 1e-15).unwrap();
        // Geometric on {0,1,..} with ratio ½: variance φ/(1−φ)² = 2.
        assert!((law.variance - 2.0).abs() < 1e-12);
        let total: f64 = law.pmf.iter().sum();
        assert!(total <= 1.0 + 1e-15 && total >= 1.0 - law.tail_bound - 1e-15);
    }

    #[test]
    fn zero_fugacity_samples_are_empty() {
        let law = EquilibriumLaw::at_fugacity(&JumpRate::linear(), 0.0, 1e-12).unwrap();
        assert!(sample_equilibrium(&law, 1000, 7).iter().all(|&k| k == 0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let law = EquilibriumLaw::at_fugacity(&JumpRate::linear(), 2.0, 1e-12).unwrap();
        assert_eq!(sample_equilibrium(&law, 100, 3), sample_equilibrium(&law, 100, 3));
        assert_ne!(sample_equilibrium(&law, 100, 3), sample_equilibrium(&law, 100, 4));
    }
}
