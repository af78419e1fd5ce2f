use serde::{Deserialize, Serialize};

use super::basis::TestBasis;
use super::functional::{i_up, static_part, DiffusionConvention, RateMethod, RateReport};
use super::RateFnError;
use crate::field::DensityField;
use crate::rates::NonlinearityModel;
use crate::skeleton_pde::{ControlField, Potential, Scheme, SolutionBundle, Stencil};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDifference {
    /// `(ρ_{k+1} − ρ_k)/τ` against the scheme's own diffusion stencil.
    #[default]
    Forward,
    /// Centred differences at interior record times, one-sided at the ends.
    Centered,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryOptions {
    /// Ridge `ε_r` in `(ε_r − div(Φ∇))H = r`.
    pub ridge: f64,
    pub difference: TimeDifference,
    pub cg_tol: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { ridge: 0.0, difference: TimeDifference::Forward, cg_tol: 1e-12 }
    }
}

/// Recovered potentials and the control they induce.
#[derive(Clone, Debug)]
pub struct ControlRecovery {
    pub report: RateReport,
    /// Times at which `H` was solved for.
    pub times: Vec<f64>,
    pub potentials: Vec<DensityField>,
    /// `g = Φ^½(ρ̄_f)∇H` on faces at `times`.
    pub control: ControlField,
    /// `½∫‖g‖²`.
    pub cost: f64,
}

/// Inverts the controlled equation for `H`, one elliptic solve per
/// recorded interval, and reports `½∫∫Φ(ρ)|∇H|²`.
pub fn recover_control(
    bundle: &SolutionBundle,
    model: &NonlinearityModel,
    conv: &DiffusionConvention,
    opts: &RecoveryOptions,
) -> Result<ControlRecovery, RateFnError> {
    conv.validate()?;
    if !(opts.ridge >= 0.0) || !(opts.cg_tol > 0.0) {
        return Err(RateFnError::InvalidArgument("ridge must be ≥ 0 and cg_tol > 0".into()));
    }
    let k_rec = bundle.fields.len();
    if k_rec < 2 {
        return Err(RateFnError::InvalidArgument("need at least two recorded fields".into()));
    }
    let grid = bundle.grid;
    let st = Stencil::new(grid);
    let (nc, nf, vol) = (st.n_cells(), st.n_faces(), grid.cell_volume());
    let f_lap = conv.pde_factor();
    let eta = bundle.viscosity;

    // (time, ρ for the weights, ∂ₜρ, ρ for the diffusion stencil, quadrature weight)
    let mut slots: Vec<(f64, usize, Vec<f64>, usize, f64)> = Vec::new();
    let t = &bundle.times;
    match opts.difference {
        TimeDifference::Forward => {
            for k in 0..k_rec - 1 {
                let tau = t[k + 1] - t[k];
                let dr: Vec<f64> =
                    bundle.fields[k + 1].values.iter().zip(&bundle.fields[k].values).map(|(a, b)| (a - b) / tau).collect();
                let stencil = if bundle.scheme == Scheme::SemiImplicit { k + 1 } else { k };
                slots.push((t[k], k, dr, stencil, tau));
            }
        }
        TimeDifference::Centered => {
            for k in 0..k_rec {
                let (lo, hi) = (k.saturating_sub(1), (k + 1).min(k_rec - 1));
                let span = t[hi] - t[lo];
                let dr: Vec<f64> =
                    bundle.fields[hi].values.iter().zip(&bundle.fields[lo].values).map(|(a, b)| (a - b) / span).collect();
                let wq = 0.5 * (t[hi.min(k + 1)] - t[k]) + 0.5 * (t[k] - t[k.saturating_sub(1)]);
                slots.push((t[k], k, dr, k, wq));
            }
        }
    }

    let mut times = Vec::with_capacity(slots.len());
    let mut potentials = Vec::with_capacity(slots.len());
    let mut faces = Vec::with_capacity(slots.len());
    let mut cost = 0.0;
    let mut projection_max = 0.0f64;
    let mut residual_max = 0.0f64;
    let (mut mean, mut phi, mut grad, mut lap_phi, mut lap_rho) =
        (vec![0.0; nf], vec![0.0; nc], vec![0.0; nf], vec![0.0; nc], vec![0.0; nc]);
    let mut w = vec![0.0; nf];
    let mut h = vec![0.0; nc];
    for (time, kw, dr, ks, wq) in slots {
        let rs = &bundle.fields[ks].values;
        for (p, &r) in phi.iter_mut().zip(rs) {
            *p = model.phi(r);
        }
        st.gradient(&phi, &mut grad);
        st.divergence(&grad, &mut lap_phi);
        st.gradient(rs, &mut grad);
        st.divergence(&grad, &mut lap_rho);
        let mut r: Vec<f64> = (0..nc).map(|i| dr[i] - f_lap * lap_phi[i] - eta * lap_rho[i]).collect();
        let m = r.iter().sum::<f64>() / nc as f64;
        projection_max = projection_max.max(m.abs());
        r.iter_mut().for_each(|v| *v -= m);

        st.face_mean(&bundle.fields[kw].values, &mut mean);
        for (wf, &mf) in w.iter_mut().zip(&mean) {
            let s = model.sqrt_phi(mf);
            *wf = s * s;
        }
        let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if wmin <= 1e-14 && opts.ridge == 0.0 {
            return Err(RateFnError::Ellipticity(format!(
                "face weight Φ(ρ̄) = {wmin:.3e} at t = {time:.6}; the inversion is not elliptic"
            )));
        }
        let out = st.solve_weighted(opts.ridge, &w, &r, &mut h, opts.cg_tol);
        residual_max = residual_max.max(out.residual);
        if !out.converged && out.residual > 1e-8 {
            return Err(RateFnError::NoConvergence(format!(
                "elliptic solve at t = {time:.6} stalled at relative residual {:.3e}",
                out.residual
            )));
        }
        st.gradient(&h, &mut grad);
        let mut g = vec![0.0; nf];
        let mut e = 0.0;
        for f in 0..nf {
            e += w[f] * grad[f] * grad[f];
            g[f] = w[f].sqrt() * grad[f];
        }
        cost += 0.5 * wq * e * vol;
        times.push(time);
        potentials.push(DensityField::new(grid, h.clone(), time));
        faces.push(g);
    }
    let t_end = *t.last().unwrap();
    // A slice at t_end (centred differences) carries no duration.
    let keep = times.iter().take_while(|&&s| s < t_end).count();
    faces.truncate(keep);
    let mut control = ControlField::from_slices(grid, times[..keep].to_vec(), t_end, faces)?;
    control.norm_sq = 2.0 * cost;
    let static_v = static_part(&bundle.fields[0], model, 1e-10)?;
    let report = RateReport {
        static_part: static_v,
        dynamic: cost,
        total: static_v + cost,
        method: RateMethod::ControlNorm,
        convention: *conv,
        coefficients: None,
        gradient_norm: None,
        iterations: times.len(),
        converged: true,
        dropped_directions: 0,
        gram_condition: None,
        projection_max: Some(projection_max),
        max_solver_residual: Some(residual_max),
    };
    Ok(ControlRecovery { report, times, potentials, control, cost })
}

/// Relative error `‖Φ^½(∇H_rec − ∇H_in)‖ / ‖Φ^½∇H_in‖` over the recovery
/// times, with `∇H_in` taken as discrete face differences.
pub fn weighted_gradient_error(
    bundle: &SolutionBundle,
    model: &NonlinearityModel,
    recovery: &ControlRecovery,
    potential: &Potential,
) -> f64 {
    let st = Stencil::new(bundle.grid);
    let nf = st.n_faces();
    let (mut num, mut den) = (0.0, 0.0);
    let mut grad = vec![0.0; nf];
    let mut mean = vec![0.0; nf];
    for (k, (&t, h)) in recovery.times.iter().zip(&recovery.potentials).enumerate() {
        let kw = bundle.times.iter().position(|&s| s == t).unwrap_or(k);
        st.face_mean(&bundle.fields[kw].values, &mut mean);
        st.gradient(&h.values, &mut grad);
        let gin = potential.face_gradient(&st, t);
        for f in 0..nf {
            let s = model.sqrt_phi(mean[f]);
            let w = s * s;
            num += w * (grad[f] - gin[f]).powi(2);
            den += w * gin[f] * gin[f];
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Both routes to the rate for one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTotal {
    pub sup_form: RateReport,
    pub control_form: RateReport,
    pub relative_gap: f64,
}

pub fn rate_total(
    bundle: &SolutionBundle,
    basis: &TestBasis,
    model: &NonlinearityModel,
    conv: &DiffusionConvention,
    opts: &RecoveryOptions,
) -> Result<RateTotal, RateFnError> {
    let sup_form = i_up(bundle, basis, model, conv)?;
    let control_form = recover_control(bundle, model, conv, opts)?.report;
    let relative_gap =
        (sup_form.dynamic - control_form.dynamic).abs() / control_form.dynamic.abs().max(sup_form.dynamic.abs()).max(1e-300);
    Ok(RateTotal { sup_form, control_form, relative_gap })
}
