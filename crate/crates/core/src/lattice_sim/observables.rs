use serde::{Deserialize, Serialize};

use super::lattice::{Configuration, Lattice};
use super::simulate::Trajectory;
use super::SimError;
use crate::field::DensityField;
use crate::numerics::{mean_and_stderr, trapezoid};
use crate::rates::{JumpRate, MomentWeight, NonlinearityModel};

/// Microscopic box radius `⌊Nε⌋`.
pub fn box_radius(lattice: &Lattice, eps: f64) -> usize {
    (lattice.l as f64 * eps + 1e-9).floor() as usize
}

/// Periodic box average over `|y − x|_∞ ≤ r`, computed one axis at a time.
pub fn box_average(lattice: &Lattice, values: &[f64], r: usize) -> Vec<f64> {
    let l = lattice.l;
    let width = 2 * r + 1;
    let mut cur = values.to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..lattice.d {
        let stride = l.pow(axis as u32);
        for start in 0..cur.len() {
            if !(start / stride).is_multiple_of(l) {
                continue;
            }
            // Sliding window along one line of the axis.
            let at = |j: usize| cur[start + (j % l) * stride];
            let mut s: f64 = (0..width).map(|j| at(j + l - r)).sum();
            for i in 0..l {
                next[start + i * stride] = s;
                s += at(i + r + 1) - at(i + l - r);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let norm = (width as f64).powi(lattice.d as i32);
    cur.iter().map(|v| v / norm).collect()
}

/// Box-averaged density `η̄^{Nε}` as a field on the `N^d` site grid, so
/// `∫ field = total/N^d`.
pub fn coarse_grain(config: &Configuration, eps: f64) -> Result<DensityField, SimError> {
    let lattice = config.lattice;
    let r = box_radius(&lattice, eps);
    if r < 1 {
        return Err(SimError::InvalidArgument(format!("⌊Nε⌋ = 0 for N = {}, ε = {eps}", lattice.l)));
    }
    if 2 * r + 1 > lattice.l {
        return Err(SimError::InvalidArgument(format!("box of radius {r} wraps around L = {}", lattice.l)));
    }
    let values: Vec<f64> = config.occupancies.iter().map(|&k| k as f64).collect();
    Ok(DensityField::new(lattice.grid(), box_average(&lattice, &values, r), 0.0))
}

/// `N^{-d} Σ_x H(x/N) η(x)`.
pub fn pair_with_test<H: Fn([f64; 3]) -> f64>(config: &Configuration, h: H) -> f64 {
    let lattice = config.lattice;
    let s: f64 = config
        .occupancies
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| h(lattice.position(i)) * k as f64)
        .sum();
    s / lattice.n_sites() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// `Ψ(η) = η(0)`, `Ψ̃(ρ) = ρ`.
    Occupancy,
    /// `Ψ(η) = λ(η(0))`, `Ψ̃(ρ) = φ(ρ)`.
    Rate,
}

/// Single-site cylinder observable of linear growth.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderObservable {
    pub kind: ObservableKind,
    pub rate: JumpRate,
    /// `C` with `|Ψ(η)| ≤ C(1 + η(0))`.
    pub growth_c: f64,
}

impl CylinderObservable {
    pub fn new(kind: ObservableKind, rate: &JumpRate) -> Self {
        let growth_c = match kind {
            ObservableKind::Occupancy => 1.0,
            ObservableKind::Rate => {
                // Exact over one tail period past the table, then the slope.
                let horizon = rate.table_len() + 4 * rate.period() + 64;
                (0..horizon)
                    .map(|k| rate.eval(k) / (1.0 + k as f64))
                    .fold(rate.tail_slope(), f64::max)
            }
        };
        CylinderObservable { kind, rate: rate.clone(), growth_c }
    }

    #[inline]
    pub fn eval(&self, k: u32) -> f64 {
        match self.kind {
            ObservableKind::Occupancy => k as f64,
            ObservableKind::Rate => self.rate.eval(k as usize),
        }
    }

    #[inline]
    pub fn tilde(&self, rho: f64, model: &NonlinearityModel) -> f64 {
        match self.kind {
            ObservableKind::Occupancy => rho,
            ObservableKind::Rate => model.phi(rho),
        }
    }
}

/// Time series and integral of `|V(H, Ψ, N, ε)|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoid integral of `|V|` over the snapshot grid.
    pub integral: f64,
}

/// `∫₀^T |N^{-d} Σ_x H(t, x/N)[τ_xΨ(η) − Ψ̃(η̄^{Nε}(x))]| dt`.
pub fn v_functional<H: Fn(f64, [f64; 3]) -> f64>(
    traj: &Trajectory,
    h: H,
    obs: &CylinderObservable,
    model: &NonlinearityModel,
    eps: f64,
) -> Result<VReport, SimError> {
    let lattice = traj.lattice;
    let inv = 1.0 / lattice.n_sites() as f64;
    let mut values = Vec::with_capacity(traj.times.len());
    for (i, &t) in traj.times.iter().enumerate() {
        let config = traj.snapshot(i);
        let field = coarse_grain(&config, eps)?;
        let mut s = 0.0;
        for (x, &k) in config.occupancies.iter().enumerate() {
            let w = h(t, lattice.position(x));
            if w != 0.0 {
                s += w * (obs.eval(k) - obs.tilde(field.values[x], model));
            }
        }
        values.push((s * inv).abs());
    }
    let integral = trapezoid(&traj.times, &values);
    Ok(VReport { times: traj.times.clone(), values, integral })
}

/// `η̄^ℓ(x)`: average over the box `|y − x|_∞ ≤ ℓ`.
pub fn box_mean(config: &Configuration, x: usize, ell: usize) -> f64 {
    let lattice = config.lattice;
    let grid = lattice.grid();
    let c = grid.coords(x);
    let l = lattice.l;
    let w = 2 * ell + 1;
    let mut sum = 0u64;
    let mut count = 0u64;
    let span = |a: usize| if a < lattice.d { w } else { 1 };
    for k in 0..span(2) {
        for j in 0..span(1) {
            for i in 0..span(0) {
                let mut cc = c;
                let offs = [i, j, k];
                for a in 0..lattice.d {
                    cc[a] = (c[a] + l - ell + offs[a]) % l;
                }
                sum += config.occupancies[grid.index(cc)] as u64;
                count += 1;
            }
        }
    }
    sum as f64 / count as f64
}

/// Monte Carlo estimate of
/// `E[|η̄^ℓ(x) − η̄^ℓ(y)| − β(w(η̄^ℓ(x)) + w(η̄^ℓ(y)))]` with its standard
/// error.
pub fn two_block_observable(
    configs: &[Configuration],
    ell: usize,
    x: usize,
    y: usize,
    weight: &MomentWeight,
    beta: f64,
) -> Result<(f64, f64), SimError> {
    if configs.len() < 100 {
        return Err(SimError::InvalidArgument(format!(
            "two-block estimate needs at least 100 samples, got {}",
            configs.len()
        )));
    }
    let lattice = configs[0].lattice;
    if 2 * ell + 1 > lattice.l {
        return Err(SimError::InvalidArgument(format!("box radius {ell} wraps around L = {}", lattice.l)));
    }
    let samples: Vec<f64> = configs
        .iter()
        .map(|c| {
            let (a, b) = (box_mean(c, x, ell), box_mean(c, y, ell));
            (a - b).abs() - beta * (weight.eval(a) + weight.eval(b))
        })
        .collect();
    Ok(mean_and_stderr(&samples))
}
