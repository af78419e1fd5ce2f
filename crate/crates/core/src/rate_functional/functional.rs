use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::basis::{SpaceTimeFunction, TestBasis};
use super::RateFnError;
use crate::field::DensityField;
use crate::rates::{relative_entropy_field, NonlinearityKind, NonlinearityModel};
use crate::skeleton_pde::{entropy_dissipation, SolutionBundle, Stencil};

/// Coefficients of `ΔH` and `|∇H|²` in `J`, and whether the controlled
/// equation carries `½ΔΦ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConvention {
    pub c_lap: f64,
    pub c_grad: f64,
    pub pde_half: bool,
}

impl Default for DiffusionConvention {
    fn default() -> Self {
        Self::generator()
    }
}

impl DiffusionConvention {
    /// `(1, ½)` with `∂ₜρ = ΔΦ(ρ) − …`: the uncontrolled solve is the
    /// zero-cost path.
    pub fn generator() -> Self {
        DiffusionConvention { c_lap: 1.0, c_grad: 0.5, pde_half: false }
    }

    /// `(½, ½)` with `∂ₜρ = ½ΔΦ(ρ) − …`.
    pub fn half() -> Self {
        DiffusionConvention { c_lap: 0.5, c_grad: 0.5, pde_half: true }
    }

    /// Factor in front of `ΔΦ` in the controlled equation.
    pub fn pde_factor(&self) -> f64 {
        if self.pde_half {
            0.5
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), RateFnError> {
        let ok = [(1.0, 0.5), (0.5, 0.5)].contains(&(self.c_lap, self.c_grad));
        if ok {
            Ok(())
        } else {
            Err(RateFnError::InvalidArgument(format!(
                "(c_lap, c_grad) = ({}, {}) is neither (1, ½) nor (½, ½)",
                self.c_lap, self.c_grad
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    SupJ,
    ControlNorm,
}

/// Static plus dynamic rate with per-method diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub static_part: f64,
    pub dynamic: f64,
    pub total: f64,
    pub method: RateMethod,
    pub convention: DiffusionConvention,
    pub coefficients: Option<Vec<f64>>,
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Basis directions dropped as numerically singular.
    pub dropped_directions: usize,
    pub gram_condition: Option<f64>,
    /// Largest `|mean|` removed from the elliptic right-hand sides.
    pub projection_max: Option<f64>,
    pub max_solver_residual: Option<f64>,
}

/// `∫Ψ_{Φ,γ}(ρ₀)`: exact relative entropy for rate-derived models, the
/// closed-form `Ψ` otherwise.
pub fn static_part(rho0: &DensityField, model: &NonlinearityModel, tol: f64) -> Result<f64, RateFnError> {
    match &model.kind {
        NonlinearityKind::FromRate(rate) if model.scale == 1.0 => {
            Ok(relative_entropy_field(rho0, model.gamma, rate, tol)?)
        }
        _ => {
            if let Some(v) = rho0.values.iter().find(|v| !(**v >= 0.0)) {
                return Err(RateFnError::InvalidArgument(format!("density entry {v} < 0")));
            }
            Ok(model.relative_entropy(rho0))
        }
    }
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for k in 0..times.len().saturating_sub(1) {
        let tau = times[k + 1] - times[k];
        w[k] += 0.5 * tau;
        w[k + 1] += 0.5 * tau;
    }
    w
}

/// `J(H, ρ) = ⟨H_T,ρ_T⟩ − ⟨H_0,ρ_0⟩ − ∫⟨∂ₜH,ρ⟩ − ∫∫Φ(ρ)(c_lap ΔH + c_grad|∇H|²)`
/// with midpoint quadrature in space and trapezoid in time.
pub fn j_functional<H: SpaceTimeFunction + ?Sized>(
    h: &H,
    bundle: &SolutionBundle,
    model: &NonlinearityModel,
    conv: &DiffusionConvention,
) -> f64 {
    let grid = bundle.grid;
    let (d, vol) = (grid.d, grid.cell_volume());
    let w = trapezoid_weights(&bundle.times);
    let last = bundle.times.len() - 1;
    let mut total = 0.0;
    for (k, f) in bundle.fields.iter().enumerate() {
        let t = bundle.times[k];
        let mut pair_end = 0.0;
        let mut inner = 0.0;
        for (c, &r) in f.values.iter().enumerate() {
            let e = h.eval(t, grid.center(c), d);
            let g2: f64 = e.grad[..d].iter().map(|v| v * v).sum();
            inner += e.dt * r + model.phi(r) * (conv.c_lap * e.lap + conv.c_grad * g2);
            if k == 0 || k == last {
                pair_end += e.value * r;
            }
        }
        if k == last {
            total += pair_end * vol;
        }
        if k == 0 {
            total -= pair_end * vol;
        }
        total -= w[k] * inner * vol;
    }
    total
}

/// `J(Σ cᵢHᵢ) = c·b − c_grad·cᵀGc` assembled against one bundle.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub b: DVector<f64>,
    /// `G_ij = ∫∫Φ(ρ)∇H_i·∇H_j`.
    pub g: DMatrix<f64>,
    pub c_grad: f64,
}

impl QuadraticForm {
    pub fn value(&self, c: &DVector<f64>) -> f64 {
        c.dot(&self.b) - self.c_grad * c.dot(&(&self.g * c))
    }

    pub fn gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.b - (&self.g * c) * (2.0 * self.c_grad)
    }
}

/// Assembles `b` and `G` for a basis against a bundle.
pub fn assemble(basis: &TestBasis, bundle: &SolutionBundle, model: &NonlinearityModel, conv: &DiffusionConvention) -> QuadraticForm {
    let grid = bundle.grid;
    let (d, nc, vol) = (grid.d, grid.len(), grid.cell_volume());
    let ns = basis.spatial.len();
    let nl = basis.time_modes;
    let n = basis.len();
    let mut val = vec![0.0; ns * nc];
    let mut lap = vec![0.0; ns * nc];
    let mut grad = vec![0.0; ns * nc * d];
    for s in 0..ns {
        for c in 0..nc {
            let (v, g, l) = basis.eval_spatial(s, grid.center(c));
            val[s * nc + c] = v;
            lap[s * nc + c] = l;
            for a in 0..d {
                grad[(s * nc + c) * d + a] = g[a];
            }
        }
    }
    let active: Vec<Vec<usize>> = (0..ns).map(|s| (0..nc).filter(|&c| val[s * nc + c] != 0.0 || lap[s * nc + c] != 0.0).collect()).collect();
    let w = trapezoid_weights(&bundle.times);
    let last = bundle.times.len() - 1;
    let mut b = DVector::<f64>::zeros(n);
    let mut gm = DMatrix::<f64>::zeros(n, n);
    let mut phi = vec![0.0; nc];
    let mut cmat = vec![0.0; ns * ns];
    for (k, f) in bundle.fields.iter().enumerate() {
        let t = bundle.times[k];
        for (p, &r) in phi.iter_mut().zip(&f.values) {
            *p = model.phi(r);
        }
        let pl: Vec<(f64, f64)> = (0..nl).map(|l| basis.eval_time(l, t)).collect();
        for s in 0..ns {
            let (mut a_s, mut b_s) = (0.0, 0.0);
            for &c in &active[s] {
                a_s += val[s * nc + c] * f.values[c];
                b_s += lap[s * nc + c] * phi[c];
            }
            a_s *= vol;
            b_s *= vol;
            for l in 0..nl {
                let i = s * nl + l;
                let (p, dp) = pl[l];
                let mut v = -w[k] * (dp * a_s + conv.c_lap * p * b_s);
                if k == last {
                    v += p * a_s;
                }
                if k == 0 {
                    v -= p * a_s;
                }
                b[i] += v;
            }
        }
        for s in 0..ns {
            for s2 in s..ns {
                let mut acc = 0.0;
                for &c in &active[s] {
                    let (g1, g2) = (&grad[(s * nc + c) * d..(s * nc + c + 1) * d], &grad[(s2 * nc + c) * d..(s2 * nc + c + 1) * d]);
                    let dotg: f64 = g1.iter().zip(g2).map(|(x, y)| x * y).sum();
                    acc += phi[c] * dotg;
                }
                cmat[s * ns + s2] = acc * vol;
                cmat[s2 * ns + s] = acc * vol;
            }
        }
        for s in 0..ns {
            for s2 in 0..ns {
                let cv = cmat[s * ns + s2];
                if cv == 0.0 {
                    continue;
                }
                for l in 0..nl {
                    for l2 in 0..nl {
                        gm[(s * nl + l, s2 * nl + l2)] += w[k] * pl[l].0 * pl[l2].0 * cv;
                    }
                }
            }
        }
    }
    QuadraticForm { b, g: gm, c_grad: conv.c_grad }
}

/// Outcome of the concave maximisation.
#[derive(Clone, Debug)]
pub struct Maximum {
    pub c: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dropped: usize,
    /// `J` is unbounded along a null direction of `G`.
    pub unbounded: bool,
}

/// Damped Newton with Armijo backtracking (factor ½). Falls back to the
/// eigen-subspace of `G` above `10⁻¹²·λ_max` when `G` is singular.
pub fn maximize(q: &QuadraticForm) -> Maximum {
    let n = q.b.len();
    let hess = &q.g * (2.0 * q.c_grad);
    let scale = q.b.norm().max(1.0);
    let tol = 1e-9 * scale;
    let eig = SymmetricEigen::new(hess.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax.max(1e-300)).collect();
    let dropped = n - keep.len();
    let chol = if dropped == 0 { Cholesky::new(hess.clone()) } else { None };
    let solve = |g: &DVector<f64>| -> DVector<f64> {
        match &chol {
            Some(ch) => ch.solve(g),
            None => {
                let mut out = DVector::zeros(n);
                for &i in &keep {
                    let v = eig.eigenvectors.column(i);
                    out += v * (v.dot(g) / eig.eigenvalues[i]);
                }
                out
            }
        }
    };
    let project = |g: &DVector<f64>| -> DVector<f64> {
        if chol.is_some() {
            return g.clone();
        }
        let mut out = DVector::zeros(n);
        for &i in &keep {
            let v = eig.eigenvectors.column(i);
            out += v * v.dot(g);
        }
        out
    };
    let mut c = DVector::<f64>::zeros(n);
    let mut value = q.value(&c);
    let mut iterations = 0;
    let mut grad = q.gradient(&c);
    let null_part = (&grad - project(&grad)).norm();
    let unbounded = null_part > tol;
    let mut gnorm = project(&grad).norm();
    while gnorm > tol && iterations < 100 {
        iterations += 1;
        let step = solve(&grad);
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        loop {
            let trial = &c + &step * alpha;
            let tv = q.value(&trial);
            if tv >= value + 1e-4 * alpha * slope || alpha < 1e-10 {
                c = trial;
                value = tv;
                break;
            }
            alpha *= 0.5;
        }
        grad = q.gradient(&c);
        gnorm = project(&grad).norm();
    }
    Maximum {
        c,
        value: if unbounded { f64::INFINITY } else { value },
        gradient_norm: gnorm,
        iterations,
        converged: gnorm <= tol,
        dropped,
        unbounded,
    }
}

/// `I^up`: static relative entropy plus `sup_c J(Σ cᵢHᵢ, ρ)`.
pub fn i_up(
    bundle: &SolutionBundle,
    basis: &TestBasis,
    model: &NonlinearityModel,
    conv: &DiffusionConvention,
) -> Result<RateReport, RateFnError> {
    conv.validate()?;
    if basis.is_empty() {
        return Err(RateFnError::InvalidArgument("empty basis".into()));
    }
    if basis.d != bundle.grid.d {
        return Err(RateFnError::InvalidArgument("basis and bundle dimensions differ".into()));
    }
    let static_v = static_part(&bundle.fields[0], model, 1e-10)?;
    let q = assemble(basis, bundle, model, conv);
    let m = maximize(&q);
    let dynamic = m.value.max(0.0);
    Ok(RateReport {
        static_part: static_v,
        dynamic,
        total: static_v + dynamic,
        method: RateMethod::SupJ,
        convention: *conv,
        coefficients: Some(m.c.iter().cloned().collect()),
        gradient_norm: Some(m.gradient_norm),
        iterations: m.iterations,
        converged: m.converged,
        dropped_directions: m.dropped,
        gram_condition: None,
        projection_max: None,
        max_solver_residual: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalReport {
    /// `sup_c ∫Φ(ρ)(−ΔH − |∇H|²)` over the basis span.
    pub basis_value: f64,
    /// The same functional at `H* = ½ log Φ(ρ)` (discrete, by parts);
    /// `None` where `Φ(ρ)` vanishes.
    pub h_star_value: Option<f64>,
    /// `D(ρ) = ∫|∇Φ^½(ρ)|²`.
    pub dissipation: f64,
    pub quarter_dissipation: f64,
    pub coefficients: Vec<f64>,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Basis maximisation of `∫Φ(ρ)(−ΔH − |∇H|²)` for a static field, with
/// the closed-form optimiser evaluated alongside.
pub fn variational_d(field: &DensityField, basis: &TestBasis, model: &NonlinearityModel) -> Result<VariationalReport, RateFnError> {
    if let Some(v) = field.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(RateFnError::InvalidArgument(format!("density entry {v} < 0")));
    }
    if basis.time_modes != 1 || basis.d != field.grid.d {
        return Err(RateFnError::InvalidArgument("variational_d needs a time-independent basis of matching dimension".into()));
    }
    let grid = field.grid;
    let (d, vol, n) = (grid.d, grid.cell_volume(), basis.len());
    let phi: Vec<f64> = field.values.iter().map(|&r| model.phi(r)).collect();
    let mut b = DVector::<f64>::zeros(n);
    let mut g = DMatrix::<f64>::zeros(n, n);
    let evals: Vec<Vec<(f64, [f64; 3], f64)>> =
        (0..n).map(|s| (0..grid.len()).map(|c| basis.eval_spatial(s, grid.center(c))).collect()).collect();
    for i in 0..n {
        b[i] = -evals[i].iter().zip(&phi).map(|(e, p)| p * e.2).sum::<f64>() * vol;
        for j in i..n {
            let v: f64 = (0..grid.len())
                .map(|c| phi[c] * (0..d).map(|a| evals[i][c].1[a] * evals[j][c].1[a]).sum::<f64>())
                .sum::<f64>()
                * vol;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let m = maximize(&QuadraticForm { b, g, c_grad: 1.0 });
    let dissipation = entropy_dissipation(field, model);
    let h_star_value = if phi.iter().all(|&p| p > 1e-300) {
        let st = Stencil::new(grid);
        let hs: Vec<f64> = phi.iter().map(|p| 0.5 * p.ln()).collect();
        let mut value = 0.0;
        for i in 0..grid.len() {
            for a in 0..d {
                let j = st.forward(i, a);
                let (dphi, dh) = ((phi[j] - phi[i]) / grid.h(), (hs[j] - hs[i]) / grid.h());
                value += dphi * dh - 0.5 * (phi[i] + phi[j]) * dh * dh;
            }
        }
        Some(value * vol)
    } else {
        None
    };
    Ok(VariationalReport {
        basis_value: m.value,
        h_star_value,
        dissipation,
        quarter_dissipation: 0.25 * dissipation,
        coefficients: m.c.iter().cloned().collect(),
        gradient_norm: m.gradient_norm,
        converged: m.converged,
    })
}
