use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::RateFnError;
use crate::field::Grid;
use crate::numerics::{gauss_legendre, legendre_with_derivative};

/// Value and derivatives of a space-time function at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HEval {
    pub value: f64,
    pub grad: [f64; 3],
    pub lap: f64,
    pub dt: f64,
}

/// Space-time test function with exact derivatives.
pub trait SpaceTimeFunction {
    fn eval(&self, t: f64, x: [f64; 3], d: usize) -> HEval;
}

impl<F: Fn(f64, [f64; 3], usize) -> HEval> SpaceTimeFunction for F {
    fn eval(&self, t: f64, x: [f64; 3], d: usize) -> HEval {
        self(t, x, d)
    }
}

/// `β(s) = exp(1 − 1/(1 − s²))` and its first two derivatives.
fn bump_1d(s: f64) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let b = (1.0 - 1.0 / q).exp();
    let d1 = -2.0 * s / (q * q);
    // β″/β = (β′/β)² + (β′/β)′
    let d2 = d1 * d1 - 2.0 / (q * q) - 8.0 * s * s / q.powi(3);
    (b, b * d1, b * d2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Const,
    Cos,
    Sin,
}

/// One spatial member: `b(x)·trig(2π k·x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialMode {
    pub k: [i32; 3],
    pub trig: Trig,
}

/// Products `b(x)·F_s(x)·P_l(2t/T − 1)` of a fixed bump `b` strictly inside
/// the unit cell, Fourier factors `F_s` and Legendre polynomials in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBasis {
    pub d: usize,
    pub spatial: Vec<SpatialMode>,
    /// Number of Legendre factors (1 gives time-independent members).
    pub time_modes: usize,
    pub t_end: f64,
    /// Half-width of the bump along each axis, centred at ½.
    pub bump_width: f64,
}

/// Wave vectors in order of increasing `|k|_∞`, one of each `±k` pair.
pub fn wave_vectors(d: usize, count: usize) -> Vec<[i32; 3]> {
    let mut out = vec![[0; 3]];
    let mut r: i32 = 1;
    while out.len() < count {
        let mut shell = Vec::new();
        let span = |a: usize| if a < d { -r..=r } else { 0..=0 };
        for k2 in span(2) {
            for k1 in span(1) {
                for k0 in span(0) {
                    let k = [k0, k1, k2];
                    if k.iter().map(|v: &i32| v.abs()).max().unwrap() != r {
                        continue;
                    }
                    // Canonical half: first nonzero component positive.
                    if k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
                        shell.push(k);
                    }
                }
            }
        }
        shell.sort_by_key(|k| (k.iter().map(|v| v * v).sum::<i32>(), *k));
        out.extend(shell);
        r += 1;
    }
    out
}

impl TestBasis {
    /// First `n_space` spatial members (constant, then cos/sin pairs) times
    /// `time_modes` Legendre factors on `[0, t_end]`.
    pub fn new(d: usize, n_space: usize, time_modes: usize, t_end: f64, bump_width: f64) -> Result<Self, RateFnError> {
        if !(1..=3).contains(&d) || n_space == 0 || time_modes == 0 {
            return Err(RateFnError::InvalidArgument("basis needs d in 1..=3 and at least one member".into()));
        }
        if !(bump_width > 0.0 && bump_width < 0.5) {
            return Err(RateFnError::InvalidArgument(format!(
                "bump half-width {bump_width} must lie in (0, ½) to stay inside the cell"
            )));
        }
        if !(t_end > 0.0) {
            return Err(RateFnError::InvalidArgument("t_end must be positive".into()));
        }
        let mut spatial = Vec::with_capacity(n_space);
        for k in wave_vectors(d, n_space) {
            if spatial.len() == n_space {
                break;
            }
            if k == [0; 3] {
                spatial.push(SpatialMode { k, trig: Trig::Const });
                continue;
            }
            spatial.push(SpatialMode { k, trig: Trig::Cos });
            if spatial.len() < n_space {
                spatial.push(SpatialMode { k, trig: Trig::Sin });
            }
        }
        Ok(TestBasis { d, spatial, time_modes, t_end, bump_width })
    }

    /// Time-independent basis of `n` members.
    pub fn spatial(d: usize, n: usize) -> Result<Self, RateFnError> {
        Self::new(d, n, 1, 1.0, 0.45)
    }

    pub fn len(&self) -> usize {
        self.spatial.len() * self.time_modes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Member `i = s·time_modes + l`.
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.time_modes, i % self.time_modes)
    }

    /// Spatial factor `b·F_s`: value, gradient, Laplacian.
    pub fn eval_spatial(&self, s: usize, x: [f64; 3]) -> (f64, [f64; 3], f64) {
        let d = self.d;
        let w = self.bump_width;
        let mut b = [(1.0, 0.0, 0.0); 3];
        for a in 0..d {
            let (v, d1, d2) = bump_1d((x[a] - 0.5) / w);
            b[a] = (v, d1 / w, d2 / (w * w));
        }
        let bump: f64 = b[..d].iter().map(|t| t.0).product();
        if bump == 0.0 {
            return (0.0, [0.0; 3], 0.0);
        }
        let mut bgrad = [0.0; 3];
        let mut blap = 0.0;
        for a in 0..d {
            let others: f64 = (0..d).filter(|&c| c != a).map(|c| b[c].0).product();
            bgrad[a] = b[a].1 * others;
            blap += b[a].2 * others;
        }
        let mode = self.spatial[s];
        let k = mode.k;
        let phase: f64 = 2.0 * PI * (0..d).map(|a| k[a] as f64 * x[a]).sum::<f64>();
        let k2: f64 = (0..d).map(|a| (2.0 * PI * k[a] as f64).powi(2)).sum();
        let (f, fprime) = match mode.trig {
            Trig::Const => (1.0, 0.0),
            Trig::Cos => (phase.cos(), -phase.sin()),
            Trig::Sin => (phase.sin(), phase.cos()),
        };
        let mut fgrad = [0.0; 3];
        for a in 0..d {
            fgrad[a] = fprime * 2.0 * PI * k[a] as f64;
        }
        let flap = -k2 * f;
        let mut grad = [0.0; 3];
        let mut cross = 0.0;
        for a in 0..d {
            grad[a] = f * bgrad[a] + bump * fgrad[a];
            cross += bgrad[a] * fgrad[a];
        }
        (bump * f, grad, f * blap + 2.0 * cross + bump * flap)
    }

    /// Legendre factor `P_l(2t/T − 1)` and its time derivative.
    pub fn eval_time(&self, l: usize, t: f64) -> (f64, f64) {
        if self.time_modes == 1 {
            return (1.0, 0.0);
        }
        let tau = (2.0 * t / self.t_end - 1.0).clamp(-1.0, 1.0);
        let (p, dp) = legendre_with_derivative(l, tau);
        (p, dp * 2.0 / self.t_end)
    }

    pub fn eval_member(&self, i: usize, t: f64, x: [f64; 3]) -> HEval {
        let (s, l) = self.split(i);
        let (v, g, lap) = self.eval_spatial(s, x);
        let (p, dp) = self.eval_time(l, t);
        HEval { value: v * p, grad: [g[0] * p, g[1] * p, g[2] * p], lap: lap * p, dt: v * dp }
    }

    /// `Σ c_i H_i`.
    pub fn combination(&self, coefficients: &[f64]) -> Combination<'_> {
        Combination { basis: self, c: coefficients.to_vec() }
    }

    /// Condition number of the space-time `L²` Gram matrix, by midpoint
    /// quadrature on `grid` and 8-point Gauss in time.
    pub fn gram_condition(&self, grid: Grid) -> f64 {
        let n = self.len();
        let (tx, tw) = gauss_legendre(8);
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let vol = grid.cell_volume();
        let spatial: Vec<Vec<f64>> =
            (0..self.spatial.len()).map(|s| (0..grid.len()).map(|c| self.eval_spatial(s, grid.center(c)).0).collect()).collect();
        let ns = self.spatial.len();
        let mut sgram = DMatrix::<f64>::zeros(ns, ns);
        for a in 0..ns {
            for b in a..ns {
                let v: f64 = spatial[a].iter().zip(&spatial[b]).map(|(x, y)| x * y).sum::<f64>() * vol;
                sgram[(a, b)] = v;
                sgram[(b, a)] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let ((si, li), (sj, lj)) = (self.split(i), self.split(j));
                let tg: f64 = tx
                    .iter()
                    .zip(&tw)
                    .map(|(x, w)| {
                        let t = 0.5 * self.t_end * (x + 1.0);
                        0.5 * self.t_end * w * self.eval_time(li, t).0 * self.eval_time(lj, t).0
                    })
                    .sum();
                gram[(i, j)] = sgram[(si, sj)] * tg;
            }
        }
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// A fixed linear combination of basis members.
#[derive(Clone, Debug)]
pub struct Combination<'a> {
    basis: &'a TestBasis,
    c: Vec<f64>,
}

impl SpaceTimeFunction for Combination<'_> {
    fn eval(&self, t: f64, x: [f64; 3], _d: usize) -> HEval {
        let mut out = HEval::default();
        let mut spatial_cache = None;
        for (i, &c) in self.c.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (s, l) = self.basis.split(i);
            let (v, g, lap) = match spatial_cache {
                Some((ss, val)) if ss == s => val,
                _ => {
                    let val = self.basis.eval_spatial(s, x);
                    spatial_cache = Some((s, val));
                    val
                }
            };
            let (p, dp) = self.basis.eval_time(l, t);
            out.value += c * v * p;
            out.dt += c * v * dp;
            out.lap += c * lap * p;
            for a in 0..3 {
                out.grad[a] += c * g[a] * p;
            }
        }
        out
    }
}
