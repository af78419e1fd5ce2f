use serde::{Deserialize, Serialize};

use super::control::{ControlField, Potential};
use super::ops::Stencil;
use super::PdeError;
use crate::field::{DensityField, Grid};
use crate::numerics::trapezoid;
use crate::rates::NonlinearityModel;

/// Floor applied to `ρ` before evaluating `Φ′` on degenerate faces.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Explicit,
    /// Backward Euler in the diffusion, solved by Picard sweeps with
    /// lagged chord-slope face diffusivities; the drift stays explicit.
    SemiImplicit,
}

fn default_safety() -> f64 {
    0.9
}
fn default_record() -> usize {
    1
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max() -> usize {
    50
}
fn default_cap() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    /// Viscosity `η_visc ≥ 0` multiplying `Δρ`.
    #[serde(default)]
    pub viscosity: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Cells below this value abort the solve.
    #[serde(default)]
    pub positivity_floor: f64,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    /// `σ = Φ^½ ∧ sigma_cap` for face controls.
    #[serde(default = "default_cap")]
    pub sigma_cap: f64,
    /// Keep every `record_every`-th step (the final state is always kept).
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
}

impl SolverParams {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverParams {
            viscosity: 0.0,
            dt,
            t_end,
            scheme: Scheme::Explicit,
            positivity_floor: 0.0,
            cfl_safety: default_safety(),
            sigma_cap: default_cap(),
            record_every: 1,
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
        }
    }

    /// Largest stable explicit step `safety·h²/(2d·A + 2d·η_visc)`.
    pub fn cfl_limit(&self, grid: Grid, model: &NonlinearityModel) -> f64 {
        let h = grid.h();
        let two_d = 2.0 * grid.d as f64;
        self.cfl_safety * h * h / (two_d * model.big_a_est + two_d * self.viscosity)
    }

    /// Step count and the uniform step that lands exactly on `t_end`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }

    fn validate(&self) -> Result<(), PdeError> {
        let bad = |m: String| Err(PdeError::InvalidArgument(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.viscosity >= 0.0) {
            return bad(format!("viscosity = {} must be nonnegative", self.viscosity));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety = {} must lie in (0, 1]", self.cfl_safety));
        }
        if !(self.sigma_cap > 0.0) {
            return bad("sigma_cap must be positive".into());
        }
        if self.record_every == 0 || self.picard_max == 0 {
            return bad("record_every and picard_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    /// Flux `Φ^½(ρ̄)∧cap · g` from a given face control.
    Field,
    /// Flux `Φ(ρ̄)∇H` from a potential; the recorded control is `Φ^½(ρ̄)∇H`.
    Potential,
}

/// States and diagnostics of one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub grid: Grid,
    pub scheme: Scheme,
    pub viscosity: f64,
    pub sigma_cap: f64,
    pub gamma: f64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub control_kind: ControlKind,
    pub times: Vec<f64>,
    pub fields: Vec<DensityField>,
    /// `‖ρ_t − γ‖²_{L²}`.
    pub l2_gamma: Vec<f64>,
    /// `∫Ψ_{Φ,γ}(ρ_t)`.
    pub entropy: Vec<f64>,
    /// `D(ρ_t) = ∫|∇Φ^½(ρ_t)|²`.
    pub dissipation: Vec<f64>,
    /// `∫|∇Θ_Φ(ρ_t)|²`.
    pub theta_energy: Vec<f64>,
    /// `∫|∇ρ_t|²`.
    pub grad_energy: Vec<f64>,
    /// Trapezoid of `D(ρ_t)` over every step.
    pub accumulated_dissipation: f64,
    /// Control actually applied, one slice per recorded step before `t_end`;
    /// `norm_sq` covers every step.
    pub control: ControlField,
    /// Total mass after each step.
    pub mass: Vec<f64>,
    pub max_mass_drift: f64,
    /// Largest `σ` value used on a face.
    pub sigma_sup: f64,
    pub max_picard_sweeps: usize,
}

impl SolutionBundle {
    pub fn final_field(&self) -> &DensityField {
        self.fields.last().unwrap()
    }

    pub fn integrated_dissipation(&self) -> f64 {
        trapezoid(&self.times, &self.dissipation)
    }

    /// Diagnostics series as CSV.
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("t,l2_gamma,entropy,dissipation,theta_energy,grad_energy,mass\n");
        for (k, &t) in self.times.iter().enumerate() {
            s.push_str(&format!(
                "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.l2_gamma[k],
                self.entropy[k],
                self.dissipation[k],
                self.theta_energy[k],
                self.grad_energy[k],
                self.fields[k].integral()
            ));
        }
        s
    }
}

enum Drift<'a> {
    Field(&'a ControlField),
    Potential(&'a Potential),
}

/// Controlled skeleton equation `∂ₜρ = ΔΦ(ρ) + η_visc Δρ − ∇·(σ(ρ)g)`.
pub fn solve_skeleton(
    model: &NonlinearityModel,
    rho0: &DensityField,
    control: &ControlField,
    params: &SolverParams,
) -> Result<SolutionBundle, PdeError> {
    if control.grid != rho0.grid {
        return Err(PdeError::InvalidArgument("control and initial field live on different grids".into()));
    }
    if control.t_end < params.t_end * (1.0 - 1e-12) {
        return Err(PdeError::InvalidArgument(format!(
            "control ends at {} before t_end = {}",
            control.t_end, params.t_end
        )));
    }
    run(model, rho0, params, Drift::Field(control))
}

/// `∂ₜρ = ΔΦ(ρ) + η_visc Δρ − ∇·(Φ(ρ)∇H)`.
pub fn solve_fokker_planck(
    model: &NonlinearityModel,
    rho0: &DensityField,
    potential: &Potential,
    params: &SolverParams,
) -> Result<SolutionBundle, PdeError> {
    run(model, rho0, params, Drift::Potential(potential))
}

struct Work {
    phi: Vec<f64>,
    root: Vec<f64>,
    mean: Vec<f64>,
    flux: Vec<f64>,
    div: Vec<f64>,
}

fn run(model: &NonlinearityModel, rho0: &DensityField, params: &SolverParams, drift: Drift) -> Result<SolutionBundle, PdeError> {
    params.validate()?;
    let grid = rho0.grid;
    if let Some((i, &v)) = rho0.values.iter().enumerate().find(|(_, &v)| !(v >= 0.0 && v.is_finite())) {
        return Err(PdeError::InvalidArgument(format!("initial density {v} at cell {i}")));
    }
    let (n_steps, dt) = params.steps();
    if params.scheme == Scheme::Explicit {
        let limit = params.cfl_limit(grid, model);
        if dt > limit * (1.0 + 1e-12) {
            return Err(PdeError::Cfl { dt, limit });
        }
    }
    let st = Stencil::new(grid);
    let (nc, nf) = (st.n_cells(), st.n_faces());
    let vol = grid.cell_volume();
    let mut rho = rho0.values.clone();
    let mut w = Work {
        phi: vec![0.0; nc],
        root: vec![0.0; nc],
        mean: vec![0.0; nf],
        flux: vec![0.0; nf],
        div: vec![0.0; nc],
    };
    let mut drift_flux = vec![0.0; nf];
    let mut g = vec![0.0; nf];
    let mut bundle = SolutionBundle {
        grid,
        scheme: params.scheme,
        viscosity: params.viscosity,
        sigma_cap: params.sigma_cap,
        gamma: model.gamma,
        dt,
        steps: n_steps,
        record_every: params.record_every,
        control_kind: match drift {
            Drift::Field(_) => ControlKind::Field,
            Drift::Potential(_) => ControlKind::Potential,
        },
        times: Vec::new(),
        fields: Vec::new(),
        l2_gamma: Vec::new(),
        entropy: Vec::new(),
        dissipation: Vec::new(),
        theta_energy: Vec::new(),
        grad_energy: Vec::new(),
        accumulated_dissipation: 0.0,
        control: ControlField::zero(grid, params.t_end),
        mass: Vec::with_capacity(n_steps + 1),
        max_mass_drift: 0.0,
        sigma_sup: 0.0,
        max_picard_sweeps: 0,
    };
    let mut control_times = Vec::new();
    let mut control_faces = Vec::new();
    let mut norm_sq = 0.0;
    let mass0: f64 = rho.iter().sum::<f64>() * vol;
    bundle.mass.push(mass0);
    let mut d_prev = dissipation_of(&st, model, &rho, &mut w.root);
    record(&mut bundle, &st, model, &rho, 0.0);
    let mut picard_w = vec![0.0; nf];
    let mut rhs = vec![0.0; nc];
    for n in 0..n_steps {
        let t = n as f64 * dt;
        // Drift flux and control at the left end of the step.
        st.face_mean(&rho, &mut w.mean);
        match drift {
            Drift::Field(c) => {
                let slice = c.slice_at(t);
                for f in 0..nf {
                    let sigma = model.sqrt_phi(w.mean[f]).min(params.sigma_cap);
                    bundle.sigma_sup = bundle.sigma_sup.max(sigma);
                    g[f] = slice[f];
                    drift_flux[f] = sigma * g[f];
                }
            }
            Drift::Potential(p) => {
                let grad_h = p.face_gradient(&st, t);
                for f in 0..nf {
                    let sigma = model.sqrt_phi(w.mean[f]);
                    bundle.sigma_sup = bundle.sigma_sup.max(sigma);
                    g[f] = sigma * grad_h[f];
                    drift_flux[f] = sigma * g[f];
                }
            }
        }
        norm_sq += dt * g.iter().map(|v| v * v).sum::<f64>() * vol;
        if n % params.record_every == 0 {
            control_times.push(t);
            control_faces.push(g.clone());
        }
        match params.scheme {
            Scheme::Explicit => {
                for i in 0..nc {
                    w.phi[i] = model.phi(rho[i]);
                }
                st.gradient(&w.phi, &mut w.flux);
                if params.viscosity > 0.0 {
                    st.gradient(&rho, &mut w.mean);
                    for f in 0..nf {
                        w.flux[f] += params.viscosity * w.mean[f];
                    }
                }
                for f in 0..nf {
                    w.flux[f] -= drift_flux[f];
                }
                st.divergence(&w.flux, &mut w.div);
                for i in 0..nc {
                    rho[i] += dt * w.div[i];
                }
            }
            Scheme::SemiImplicit => {
                st.divergence(&drift_flux, &mut w.div);
                for i in 0..nc {
                    rhs[i] = rho[i] - dt * w.div[i];
                }
                let mut iterate = rho.clone();
                let mut sweeps = 0;
                loop {
                    sweeps += 1;
                    for i in 0..nc {
                        w.phi[i] = model.phi(iterate[i]);
                    }
                    for i in 0..nc {
                        for a in 0..grid.d {
                            let j = st.forward(i, a);
                            let dr = iterate[j] - iterate[i];
                            let slope = if dr.abs() > 1e-9 * (1.0 + iterate[i].abs()) {
                                (w.phi[j] - w.phi[i]) / dr
                            } else {
                                model.dphi((0.5 * (iterate[i] + iterate[j])).max(DEGENERATE_FLOOR))
                            };
                            picard_w[i * grid.d + a] = dt * (slope.max(0.0) + params.viscosity);
                        }
                    }
                    let mut next = iterate.clone();
                    let out = st.solve_weighted(1.0, &picard_w, &rhs, &mut next, 1e-14);
                    if !out.converged && out.residual > 1e-11 {
                        return Err(PdeError::NoConvergence(format!(
                            "linear solve at step {n} stalled with relative residual {:.3e}",
                            out.residual
                        )));
                    }
                    let scale = iterate.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    let change = next.iter().zip(&iterate).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    iterate = next;
                    if change <= params.picard_tol * scale {
                        break;
                    }
                    if sweeps >= params.picard_max {
                        return Err(PdeError::NoConvergence(format!(
                            "Picard iteration at step {n} did not reach {:.1e} in {sweeps} sweeps (change {change:.3e})",
                            params.picard_tol
                        )));
                    }
                }
                bundle.max_picard_sweeps = bundle.max_picard_sweeps.max(sweeps);
                rho = iterate;
            }
        }
        let scale = rho.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if let Some((cell, &value)) =
            rho.iter().enumerate().find(|(_, &v)| v < params.positivity_floor - 1e-12 * scale || !v.is_finite())
        {
            return Err(PdeError::Negative { step: n + 1, time: t + dt, cell, value });
        }
        let mass: f64 = rho.iter().sum::<f64>() * vol;
        let prev = *bundle.mass.last().unwrap();
        bundle.max_mass_drift = bundle.max_mass_drift.max((mass - prev).abs() / prev.abs().max(1e-300));
        bundle.mass.push(mass);
        let d_now = dissipation_of(&st, model, &rho, &mut w.root);
        bundle.accumulated_dissipation += 0.5 * dt * (d_prev + d_now);
        d_prev = d_now;
        if (n + 1) % params.record_every == 0 || n + 1 == n_steps {
            record(&mut bundle, &st, model, &rho, (n + 1) as f64 * dt);
        }
    }
    let mut control = ControlField::from_slices(grid, control_times, params.t_end, control_faces)?;
    control.norm_sq = norm_sq;
    bundle.control = control;
    Ok(bundle)
}

fn dissipation_of(st: &Stencil, model: &NonlinearityModel, rho: &[f64], root: &mut [f64]) -> f64 {
    for (r, &v) in root.iter_mut().zip(rho) {
        *r = model.sqrt_phi(v);
    }
    st.weighted_dirichlet(root, None)
}

fn record(bundle: &mut SolutionBundle, st: &Stencil, model: &NonlinearityModel, rho: &[f64], t: f64) {
    let vol = st.grid.cell_volume();
    let gamma = model.gamma;
    let mut tmp = vec![0.0; rho.len()];
    bundle.l2_gamma.push(rho.iter().map(|v| (v - gamma) * (v - gamma)).sum::<f64>() * vol);
    bundle.entropy.push(rho.iter().map(|&v| model.psi(v)).sum::<f64>() * vol);
    bundle.dissipation.push(dissipation_of(st, model, rho, &mut tmp));
    for (o, &v) in tmp.iter_mut().zip(rho) {
        *o = model.theta(v);
    }
    bundle.theta_energy.push(st.weighted_dirichlet(&tmp, None));
    bundle.grad_energy.push(st.weighted_dirichlet(rho, None));
    bundle.times.push(t);
    bundle.fields.push(DensityField::new(st.grid, rho.to_vec(), t));
}
