use serde::{Deserialize, Serialize};

use super::control::{ControlField, Potential};
use super::ops::{interpolate_cells, Stencil};
use super::solver::{solve_fokker_planck, solve_skeleton, ControlKind, SolutionBundle, SolverParams};
use super::PdeError;
use crate::field::{DensityField, Grid};
use crate::numerics::trapezoid;
use crate::rates::NonlinearityModel;

/// `D(ρ) = ∫|∇Φ^½(ρ)|²` with compact face differences.
pub fn entropy_dissipation(field: &DensityField, model: &NonlinearityModel) -> f64 {
    let root: Vec<f64> = field.values.iter().map(|&v| model.sqrt_phi(v)).collect();
    Stencil::new(field.grid).weighted_dirichlet(&root, None)
}

/// Face-centre position of face `(i, a)`.
fn face_center(grid: Grid, i: usize, a: usize) -> [f64; 3] {
    let mut x = grid.center(i);
    x[a] += 0.5 * grid.h();
    x
}

/// Weak-form defect at the recorded time `times[k]`:
/// `∫ρ_tψ − ∫ρ₀ψ + ∫∫∇Φ(ρ)·∇ψ + η_visc∫∫∇ρ·∇ψ − ∫∫σ(ρ)g·∇ψ`.
pub fn weak_residual<P: Fn([f64; 3]) -> (f64, [f64; 3])>(
    bundle: &SolutionBundle,
    model: &NonlinearityModel,
    psi: P,
    k: usize,
) -> f64 {
    let grid = bundle.grid;
    let st = Stencil::new(grid);
    let (d, nc, vol) = (grid.d, grid.len(), grid.cell_volume());
    let psi_cells: Vec<f64> = (0..nc).map(|i| psi(grid.center(i)).0).collect();
    let mut dpsi = vec![0.0; st.n_faces()];
    for i in 0..nc {
        for a in 0..d {
            dpsi[i * d + a] = psi(face_center(grid, i, a)).1[a];
        }
    }
    let pair = |v: &[f64]| v.iter().zip(&psi_cells).map(|(a, b)| a * b).sum::<f64>() * vol;
    let mut face = vec![0.0; st.n_faces()];
    let mut phi = vec![0.0; nc];
    let diffusion: Vec<f64> = bundle.fields[..=k]
        .iter()
        .map(|f| {
            for (p, &r) in phi.iter_mut().zip(&f.values) {
                *p = model.phi(r) + bundle.viscosity * r;
            }
            st.gradient(&phi, &mut face);
            face.iter().zip(&dpsi).map(|(a, b)| a * b).sum::<f64>() * vol
        })
        .collect();
    let diff_int = trapezoid(&bundle.times[..=k], &diffusion);
    let mut drift_int = 0.0;
    for j in 0..k {
        let f = &bundle.fields[j];
        let g = bundle.control.slice_at(bundle.times[j]);
        st.face_mean(&f.values, &mut face);
        let mut s = 0.0;
        for (q, &m) in face.iter().enumerate() {
            let mut sigma = model.sqrt_phi(m);
            if bundle.control_kind == ControlKind::Field {
                sigma = sigma.min(bundle.sigma_cap);
            }
            s += sigma * g[q] * dpsi[q];
        }
        drift_int += (bundle.times[j + 1] - bundle.times[j]) * s * vol;
    }
    pair(&bundle.fields[k].values) - pair(&bundle.fields[0].values) + diff_int - drift_int
}

/// Measured sides of the energy, time-regularity and relative-entropy
/// estimates; constants are reported rather than assumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `sup‖ρ−γ‖² + ‖∇Θ_Φ(ρ)‖² + η_visc‖∇ρ‖²`.
    pub energy_lhs: f64,
    /// `‖ρ₀−γ‖²`.
    pub energy_initial: f64,
    /// `‖σ‖²_∞‖g‖²`.
    pub energy_control: f64,
    /// Smallest `c` with `lhs ≤ initial + c·control`; `None` when no control
    /// term is available and none is needed.
    pub energy_constant: Option<f64>,
    /// `‖ρ−γ‖_{H¹_tH⁻¹}` with `H⁻¹` normed by `(I − Δ)⁻¹`.
    pub regularity_lhs: f64,
    /// `‖ρ₀−γ‖ + (η_visc + A)‖∇ρ‖ + ‖σ‖_∞‖g‖`.
    pub regularity_rhs: f64,
    /// `sup∫Ψ_{Φ,γ}(ρ) + ∫∫|∇Φ^½(ρ)|²`.
    pub entropy_lhs: f64,
    /// `∫Ψ_{Φ,γ}(ρ₀) + ‖g‖²`.
    pub entropy_rhs: f64,
    /// `entropy_lhs / entropy_rhs` (0 when both vanish).
    pub entropy_constant: f64,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 1e-14 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn h_minus_one_sq(st: &Stencil, f: &[f64]) -> f64 {
    let mut u = vec![0.0; f.len()];
    let ones = vec![1.0; st.n_faces()];
    st.solve_weighted(1.0, &ones, f, &mut u, 1e-13);
    f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() * st.grid.cell_volume()
}

pub fn energy_report(bundle: &SolutionBundle, model: &NonlinearityModel) -> EnergyReport {
    let st = Stencil::new(bundle.grid);
    let g_sq = bundle.control.norm_sq;
    let sigma_sq = bundle.sigma_sup * bundle.sigma_sup;
    let theta_int = trapezoid(&bundle.times, &bundle.theta_energy);
    let grad_int = trapezoid(&bundle.times, &bundle.grad_energy);
    let sup_l2 = bundle.l2_gamma.iter().cloned().fold(0.0, f64::max);
    let energy_lhs = sup_l2 + theta_int + bundle.viscosity * grad_int;
    let energy_initial = bundle.l2_gamma[0];
    let energy_control = sigma_sq * g_sq;
    let excess = energy_lhs - energy_initial;
    let energy_constant = if energy_control > 0.0 {
        Some((excess / energy_control).max(0.0))
    } else if excess <= 1e-12 * energy_initial.max(1e-300) {
        None
    } else {
        Some(f64::INFINITY)
    };
    let gamma = bundle.gamma;
    let shifted: Vec<f64> = bundle
        .fields
        .iter()
        .map(|f| {
            let v: Vec<f64> = f.values.iter().map(|r| r - gamma).collect();
            h_minus_one_sq(&st, &v)
        })
        .collect();
    let mut dt_sq = Vec::with_capacity(bundle.fields.len().saturating_sub(1));
    for w in bundle.fields.windows(2) {
        let tau = w[1].time - w[0].time;
        let v: Vec<f64> = w[1].values.iter().zip(&w[0].values).map(|(a, b)| (a - b) / tau).collect();
        dt_sq.push(h_minus_one_sq(&st, &v) * tau);
    }
    let regularity_lhs = (trapezoid(&bundle.times, &shifted) + dt_sq.iter().sum::<f64>()).sqrt();
    let regularity_rhs = energy_initial.sqrt()
        + (bundle.viscosity + model.big_a_est) * grad_int.sqrt()
        + bundle.sigma_sup * g_sq.sqrt();
    let sup_psi = bundle.entropy.iter().cloned().fold(0.0, f64::max);
    let entropy_lhs = sup_psi + bundle.accumulated_dissipation;
    let entropy_rhs = bundle.entropy[0] + g_sq;
    EnergyReport {
        energy_lhs,
        energy_initial,
        energy_control,
        energy_constant,
        regularity_lhs,
        regularity_rhs,
        entropy_lhs,
        entropy_rhs,
        entropy_constant: ratio(entropy_lhs, entropy_rhs),
    }
}

/// Kinetic indicator `χ(·, ξ, t) = 1_{0<ξ<ρ}` on one recorded time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSlice {
    pub time: f64,
    pub xi: f64,
    pub indicator: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticReport {
    pub xi_edges: Vec<f64>,
    /// `χ` at the initial and final recorded times for every edge value.
    pub chi_slices: Vec<ChiSlice>,
    /// `p̂(bin) = ∫∫ 1_{ρ∈bin} Φ′(ρ)|∇ρ|²`.
    pub defect_density: Vec<f64>,
    /// Defect mass of cells outside the ξ range.
    pub overflow: f64,
    /// Face-based `∫∫Φ′(ρ)|∇ρ|²`, independent of the binning.
    pub reference_total: f64,
    pub tail_masses: Vec<(f64, f64)>,
    pub sup_rho: f64,
}

impl KineticReport {
    pub fn binned_total(&self) -> f64 {
        self.defect_density.iter().sum::<f64>() + self.overflow
    }
}

/// Bins the parabolic defect `Φ′(ρ)|∇ρ|²` in `ξ` (edges `xi_edges`) and
/// measures `p̂(R^d × [M, M+1] × [0, T])` for each `M`.
pub fn kinetic_diagnostics(
    bundle: &SolutionBundle,
    model: &NonlinearityModel,
    xi_edges: &[f64],
    m_list: &[f64],
) -> Result<KineticReport, PdeError> {
    if xi_edges.len() < 2 || xi_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PdeError::InvalidArgument("ξ edges must be strictly increasing with at least two values".into()));
    }
    let grid = bundle.grid;
    let st = Stencil::new(grid);
    let (d, nc, vol, h) = (grid.d, grid.len(), grid.cell_volume(), grid.h());
    let nt = bundle.times.len();
    let mut weights = vec![0.0; nt];
    for k in 0..nt.saturating_sub(1) {
        let tau = bundle.times[k + 1] - bundle.times[k];
        weights[k] += 0.5 * tau;
        weights[k + 1] += 0.5 * tau;
    }
    let nb = xi_edges.len() - 1;
    let mut defect = vec![0.0; nb];
    let mut overflow = 0.0;
    let mut reference = 0.0;
    let mut tails = vec![0.0; m_list.len()];
    let mut sup_rho = 0.0f64;
    for (k, f) in bundle.fields.iter().enumerate() {
        let rho = &f.values;
        sup_rho = sup_rho.max(f.max());
        for i in 0..nc {
            let mut g2 = 0.0;
            for a in 0..d {
                let (fw, bw) = (rho[st.forward(i, a)] - rho[i], rho[i] - rho[st.backward(i, a)]);
                g2 += 0.5 * (fw * fw + bw * bw) / (h * h);
                let m = 0.5 * (rho[i] + rho[st.forward(i, a)]);
                reference += weights[k] * model.dphi(m) * fw * fw / (h * h) * vol;
            }
            let dens = weights[k] * model.dphi(rho[i]) * g2 * vol;
            let r = rho[i];
            let bin = xi_edges.partition_point(|&e| e <= r);
            if bin == 0 || bin > nb || (bin == nb + 1 && r > xi_edges[nb]) {
                if r == xi_edges[nb] {
                    defect[nb - 1] += dens;
                } else {
                    overflow += dens;
                }
            } else {
                defect[bin - 1] += dens;
            }
            for (t, &mm) in tails.iter_mut().zip(m_list) {
                if r >= mm && r <= mm + 1.0 {
                    *t += dens;
                }
            }
        }
    }
    let mut chi_slices = Vec::new();
    for k in [0, nt - 1] {
        let f = &bundle.fields[k];
        for &xi in xi_edges {
            chi_slices.push(ChiSlice { time: f.time, xi, indicator: f.values.iter().map(|&r| 0.0 < xi && xi < r).collect() });
        }
        if nt == 1 {
            break;
        }
    }
    Ok(KineticReport {
        xi_edges: xi_edges.to_vec(),
        chi_slices,
        defect_density: defect,
        overflow,
        reference_total: reference,
        tail_masses: m_list.iter().cloned().zip(tails).collect(),
        sup_rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub levels: Vec<usize>,
    /// `‖I(ρ_M) − ρ_finest‖_{L¹}` at `t_end` for every level but the finest.
    pub distances: Vec<f64>,
    /// `log₂` ratios of successive distances (per halving of `h`).
    pub orders: Vec<f64>,
}

/// Solves the same `(ρ₀, H)` on each cell count in `levels` (increasing),
/// with `dt ∝ h²`, and measures distances to the finest solution after
/// interpolating to its grid.
pub fn uniqueness_probe<F: Fn([f64; 3]) -> f64>(
    model: &NonlinearityModel,
    d: usize,
    rho0: F,
    potential: Option<&Potential>,
    base: &SolverParams,
    levels: &[usize],
) -> Result<UniquenessReport, PdeError> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(PdeError::InvalidArgument("levels must be nondecreasing with at least two entries".into()));
    }
    let m0 = levels[0] as f64;
    let mut finals = Vec::new();
    for &m in levels {
        let grid = Grid::new(d, m);
        let init = DensityField::from_fn(grid, &rho0);
        let mut p = base.clone();
        p.dt = base.dt * (m0 / m as f64).powi(2);
        p.record_every = usize::MAX / 2;
        let b = match potential {
            Some(pot) => solve_fokker_planck(model, &init, pot, &p)?,
            None => solve_skeleton(model, &init, &ControlField::zero(grid, p.t_end), &p)?,
        };
        finals.push(b.final_field().clone());
    }
    let fine = finals.last().unwrap();
    let distances: Vec<f64> = finals[..finals.len() - 1]
        .iter()
        .map(|f| {
            let v = if f.grid == fine.grid { f.values.clone() } else { interpolate_cells(&f.values, f.grid, fine.grid) };
            DensityField::new(fine.grid, v, fine.time).l1_distance(fine)
        })
        .collect();
    let orders = distances
        .windows(2)
        .zip(levels.windows(2))
        .map(|(e, l)| (e[0] / e[1]).ln() / (l[1] as f64 / l[0] as f64).ln())
        .collect();
    Ok(UniquenessReport { levels: levels.to_vec(), distances, orders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{linspace, ClosedForm};
    use std::f64::consts::PI;

    fn identity() -> NonlinearityModel {
        NonlinearityModel::closed_form(ClosedForm::Identity, &linspace(0.0, 4.0, 9), 1.0).unwrap()
    }

    #[test]
    fn dissipation_of_sine_profile() {
        // D = ∫ (π cos 2πx)² / (1 + ½ sin 2πx) · ¼ ... via √ρ: |∇√ρ|² = |ρ′|²/(4ρ).
        let model = identity();
        let g = Grid::new(1, 2048);
        let f = DensityField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let oracle = crate::numerics::integrate(
            |x| {
                let r = 1.0 + 0.5 * (2.0 * PI * x).sin();
                let dr = PI * (2.0 * PI * x).cos();
                dr * dr / (4.0 * r)
            },
            0.0,
            1.0,
            64,
            8,
        );
        let dval = entropy_dissipation(&f, &model);
        assert!((dval - oracle).abs() < 1e-5 * oracle, "{dval} vs {oracle}");
        assert_eq!(entropy_dissipation(&DensityField::constant(g, 2.0), &model), 0.0);
    }

    #[test]
    fn weak_residual_of_constant_and_zero_test() {
        let model = identity();
        let g = Grid::new(1, 32);
        let p = SolverParams::new(1e-4, 0.005);
        let b = solve_skeleton(&model, &DensityField::constant(g, 1.0), &ControlField::zero(g, 0.005), &p).unwrap();
        let k = b.times.len() - 1;
        let r = weak_residual(&b, &model, |x| ((2.0 * PI * x[0]).sin(), [2.0 * PI * (2.0 * PI * x[0]).cos(), 0.0, 0.0]), k);
        assert!(r.abs() < 1e-14);
        let f0 = DensityField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let b = solve_skeleton(&model, &f0, &ControlField::zero(g, 0.005), &p).unwrap();
        assert_eq!(weak_residual(&b, &model, |_| (0.0, [0.0; 3]), k), 0.0);
    }

    #[test]
    fn kinetic_tail_vanishes_beyond_range() {
        let model = identity();
        let g = Grid::new(1, 64);
        let f0 = DensityField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let b = solve_skeleton(&model, &f0, &ControlField::zero(g, 0.01), &SolverParams::new(1e-4, 0.01)).unwrap();
        let edges = linspace(0.0, 3.0, 61);
        let rep = kinetic_diagnostics(&b, &model, &edges, &[0.0, 1.0, 1.6, 2.0]).unwrap();
        assert_eq!(rep.overflow, 0.0);
        assert_eq!(rep.tail_masses[2].1, 0.0);
        assert_eq!(rep.tail_masses[3].1, 0.0);
        assert!((rep.binned_total() - rep.reference_total).abs() < 0.01 * rep.reference_total);
    }
}
