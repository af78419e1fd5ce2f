use serde::{Deserialize, Serialize};

use super::equilibrium::{fugacity_of_density, series_tol, EquilibriumLaw};
use super::{JumpRate, RateError};
use crate::numerics::gauss_legendre;

/// Nonlinearities known in closed form, used when no rate table is needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClosedForm {
    /// `Φ(ξ) = ξ`.
    Identity,
    /// `Φ(ξ) = ξ/(1+ξ)`.
    Geometric,
    /// `Φ(ξ) = ξ^m`; degenerate at 0 for `m > 1`.
    Power { exponent: f64 },
}

impl ClosedForm {
    fn phi(&self, x: f64) -> f64 {
        match self {
            ClosedForm::Identity => x,
            ClosedForm::Geometric => x / (1.0 + x),
            ClosedForm::Power { exponent } => x.max(0.0).powf(*exponent),
        }
    }

    fn dphi(&self, x: f64) -> f64 {
        match self {
            ClosedForm::Identity => 1.0,
            ClosedForm::Geometric => 1.0 / ((1.0 + x) * (1.0 + x)),
            ClosedForm::Power { exponent } => {
                let m = *exponent;
                m * x.max(1e-12).powf(m - 1.0)
            }
        }
    }

    fn theta(&self, x: f64) -> f64 {
        match self {
            ClosedForm::Identity => x,
            ClosedForm::Geometric => x.ln_1p(),
            ClosedForm::Power { exponent } => {
                let m = *exponent;
                2.0 * m.sqrt() / (m + 1.0) * x.max(0.0).powf(0.5 * (m + 1.0))
            }
        }
    }

    fn psi(&self, x: f64, gamma: f64) -> f64 {
        let ent = |x: f64| xlog(x, gamma) - (x - gamma);
        match self {
            ClosedForm::Identity => ent(x),
            ClosedForm::Geometric => {
                let g = gamma / (1.0 + gamma);
                let lr = if x > 0.0 { x * (x / (1.0 + x) / g).ln() } else { 0.0 };
                lr - ((1.0 + x) / (1.0 + gamma)).ln()
            }
            ClosedForm::Power { exponent } => exponent * ent(x),
        }
    }

    /// `log Z(Φ(ξ))` where the rate family is known.
    fn log_z(&self, x: f64) -> f64 {
        match self {
            ClosedForm::Identity => x,
            ClosedForm::Geometric => x.ln_1p(),
            ClosedForm::Power { .. } => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClosedForm::Identity => "identity".into(),
            ClosedForm::Geometric => "geometric".into(),
            ClosedForm::Power { exponent } => format!("power-{exponent}"),
        }
    }
}

/// `x·log(x/γ)` with the `0·log 0 = 0` convention.
fn xlog(x: f64, gamma: f64) -> f64 {
    if x > 0.0 {
        x * (x / gamma).ln()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    FromRate(JumpRate),
    ClosedForm(ClosedForm),
}

/// How values between grid nodes are reconstructed for rate-derived models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Cubic Hermite through `(ρ_i, φ_i, φ′_i)`.
    #[default]
    CubicHermite,
    /// Straight chords; `Φ′` is piecewise constant, giving a kinked `Φ`.
    PiecewiseLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub rho: f64,
    pub phi: f64,
    pub dphi: f64,
    /// `log Z(φ(ρ))`; zero for closed forms without a rate family.
    pub log_z: f64,
}

/// Macroscopic nonlinearity `Φ` with its derived scalar functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityModel {
    pub kind: NonlinearityKind,
    pub nodes: Vec<GridNode>,
    pub gamma: f64,
    /// Lower ellipticity estimate `a`.
    pub a_est: f64,
    /// Upper ellipticity estimate `A`.
    pub big_a_est: f64,
    pub vartheta: f64,
    pub interpolation: Interpolation,
    /// Multiplier applied to `Φ` (1 unless rescaled).
    pub scale: f64,
    theta_nodes: Vec<f64>,
    /// `∫₀^{ρ_i} log Φ` at nodes, used by the piecewise-linear `Ψ`.
    logint_nodes: Vec<f64>,
}

fn check_grid(rho_grid: &[f64], gamma: f64) -> Result<Vec<f64>, RateError> {
    if rho_grid.len() < 2 {
        return Err(RateError::InvalidArgument("density grid needs at least two points".into()));
    }
    if rho_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(RateError::InvalidArgument("density grid must be finite and ≥ 0".into()));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RateError::InvalidArgument("density grid must be strictly increasing".into()));
    }
    let (lo, hi) = (rho_grid[0], rho_grid[rho_grid.len() - 1]);
    if !(gamma > lo && gamma < hi) {
        return Err(RateError::InvalidArgument(format!(
            "γ = {gamma} must lie strictly inside the grid range ({lo}, {hi})"
        )));
    }
    let mut grid = Vec::with_capacity(rho_grid.len() + 1);
    if lo > 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(rho_grid);
    Ok(grid)
}

/// Tabulates `φ` on a density grid (with `ρ = 0` prepended when absent) and
/// cross-checks `φ′ = φ/Var` against finite differences of `φ`.
pub fn build_nonlinearity(
    rate: &JumpRate,
    rho_grid: &[f64],
    gamma: f64,
    tol: f64,
) -> Result<NonlinearityModel, RateError> {
    let grid = check_grid(rho_grid, gamma)?;
    let phi_at = |r: f64| fugacity_of_density(rate, r, 1e-13 * r.max(1.0));
    let mut nodes = Vec::with_capacity(grid.len());
    for &rho in &grid {
        let phi = phi_at(rho)?;
        let law = EquilibriumLaw::at_fugacity(rate, phi, series_tol(1e-13))?;
        let dphi = if rho == 0.0 { rate.eval(1) } else { phi / law.variance };

        let h = 1e-4 * rho.max(1.0);
        let dphi_fd = if rho >= h {
            (phi_at(rho + h)? - phi_at(rho - h)?) / (2.0 * h)
        } else {
            (-3.0 * phi_at(rho)? + 4.0 * phi_at(rho + h)? - phi_at(rho + 2.0 * h)?) / (2.0 * h)
        };
        if (dphi - dphi_fd).abs() > 10.0 * tol * dphi.abs().max(1.0) {
            return Err(RateError::Inconsistent(format!(
                "φ′({rho}): variance route {dphi} vs difference route {dphi_fd}"
            )));
        }
        nodes.push(GridNode { rho, phi, dphi, log_z: law.z_value.ln() });
    }
    if let Some(w) = nodes.windows(2).find(|w| w[1].phi <= w[0].phi) {
        return Err(RateError::Inconsistent(format!(
            "φ not strictly increasing between ρ = {} and ρ = {}",
            w[0].rho, w[1].rho
        )));
    }
    Ok(NonlinearityModel::assemble(
        NonlinearityKind::FromRate(rate.clone()),
        nodes,
        gamma,
        Interpolation::CubicHermite,
    ))
}

impl NonlinearityModel {
    pub fn closed_form(form: ClosedForm, rho_grid: &[f64], gamma: f64) -> Result<Self, RateError> {
        if let ClosedForm::Power { exponent } = form {
            if !(exponent.is_finite() && exponent >= 1.0) {
                return Err(RateError::InvalidArgument(format!("power exponent {exponent} must be ≥ 1")));
            }
        }
        let grid = check_grid(rho_grid, gamma)?;
        let nodes = grid
            .iter()
            .map(|&rho| GridNode {
                rho,
                phi: form.phi(rho),
                dphi: form.dphi(rho),
                log_z: form.log_z(rho),
            })
            .collect();
        Ok(Self::assemble(NonlinearityKind::ClosedForm(form), nodes, gamma, Interpolation::CubicHermite))
    }

    fn assemble(kind: NonlinearityKind, nodes: Vec<GridNode>, gamma: f64, interpolation: Interpolation) -> Self {
        let a_est = nodes.iter().map(|n| n.dphi).fold(f64::INFINITY, f64::min);
        let big_a_est = nodes.iter().map(|n| n.dphi).fold(f64::NEG_INFINITY, f64::max);
        let vartheta = if a_est > 0.0 { (big_a_est / a_est).sqrt() } else { f64::INFINITY };
        let mut model = NonlinearityModel {
            kind,
            nodes,
            gamma,
            a_est,
            big_a_est,
            vartheta,
            interpolation,
            scale: 1.0,
            theta_nodes: Vec::new(),
            logint_nodes: Vec::new(),
        };
        model.rebuild_cumulative();
        model
    }

    fn rebuild_cumulative(&mut self) {
        let n = self.nodes.len();
        let (gx, gw) = gauss_legendre(8);
        let mut theta = vec![0.0; n];
        let mut logint = vec![0.0; n];
        for i in 0..n - 1 {
            let (a, b) = (self.nodes[i].rho, self.nodes[i + 1].rho);
            let w = b - a;
            theta[i + 1] = theta[i]
                + match self.interpolation {
                    Interpolation::PiecewiseLinear => self.chord(i).sqrt() * w,
                    Interpolation::CubicHermite => {
                        let mid = 0.5 * (a + b);
                        gx.iter()
                            .zip(&gw)
                            .map(|(x, wt)| wt * self.raw_dphi(mid + 0.5 * w * x).max(0.0).sqrt())
                            .sum::<f64>()
                            * 0.5
                            * w
                    }
                };
            logint[i + 1] = logint[i] + log_chord_integral(self.nodes[i].phi, self.chord(i), w);
        }
        self.theta_nodes = theta;
        self.logint_nodes = logint;
    }

    /// Same model with Hermite or chord reconstruction between nodes.
    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self.rebuild_cumulative();
        self
    }

    /// Same model with `Φ` multiplied by `kappa`.
    pub fn scaled(&self, kappa: f64) -> Self {
        assert!(kappa > 0.0);
        let mut m = self.clone();
        m.scale *= kappa;
        m.a_est *= kappa;
        m.big_a_est *= kappa;
        m
    }

    pub fn rho_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].rho
    }

    pub fn label(&self) -> String {
        match &self.kind {
            NonlinearityKind::FromRate(r) => r.name().to_string(),
            NonlinearityKind::ClosedForm(c) => c.label(),
        }
    }

    fn chord(&self, i: usize) -> f64 {
        let (p, q) = (&self.nodes[i], &self.nodes[i + 1]);
        (q.phi - p.phi) / (q.rho - p.rho)
    }

    /// Interval index with `nodes[i].rho ≤ x < nodes[i+1].rho`, clamped.
    fn locate(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|n| n.rho <= x);
        i.saturating_sub(1).min(self.nodes.len() - 2)
    }

    fn closed(&self) -> Option<&ClosedForm> {
        match &self.kind {
            NonlinearityKind::ClosedForm(c) if self.interpolation == Interpolation::CubicHermite => Some(c),
            _ => None,
        }
    }

    fn raw_phi(&self, x: f64) -> f64 {
        if let Some(c) = self.closed() {
            return c.phi(x);
        }
        let last = self.nodes.len() - 1;
        if x >= self.nodes[last].rho {
            let n = &self.nodes[last];
            let slope = match self.interpolation {
                Interpolation::CubicHermite => n.dphi,
                Interpolation::PiecewiseLinear => self.chord(last - 1),
            };
            return n.phi + slope * (x - n.rho);
        }
        if x <= 0.0 {
            return self.nodes[0].dphi * x;
        }
        let i = self.locate(x);
        let (p, q) = (&self.nodes[i], &self.nodes[i + 1]);
        match self.interpolation {
            Interpolation::PiecewiseLinear => p.phi + self.chord(i) * (x - p.rho),
            Interpolation::CubicHermite => hermite(p.rho, q.rho, p.phi, q.phi, p.dphi, q.dphi, x).0,
        }
    }

    fn raw_dphi(&self, x: f64) -> f64 {
        if let Some(c) = self.closed() {
            return c.dphi(x);
        }
        let last = self.nodes.len() - 1;
        match self.interpolation {
            Interpolation::PiecewiseLinear => self.chord(self.locate(x.clamp(0.0, self.nodes[last].rho))),
            Interpolation::CubicHermite => {
                if x >= self.nodes[last].rho {
                    return self.nodes[last].dphi;
                }
                if x <= 0.0 {
                    return self.nodes[0].dphi;
                }
                let i = self.locate(x);
                let (p, q) = (&self.nodes[i], &self.nodes[i + 1]);
                hermite(p.rho, q.rho, p.phi, q.phi, p.dphi, q.dphi, x).1
            }
        }
    }

    /// `Φ(ξ)`.
    pub fn phi(&self, x: f64) -> f64 {
        self.scale * self.raw_phi(x)
    }

    /// `Φ′(ξ)`, evaluated at `ξ ∨ 10⁻¹²` for degenerate closed forms.
    pub fn dphi(&self, x: f64) -> f64 {
        self.scale * self.raw_dphi(x)
    }

    /// `Φ^½(ξ)`, clipped at zero for negative arguments.
    pub fn sqrt_phi(&self, x: f64) -> f64 {
        self.phi(x).max(0.0).sqrt()
    }

    /// `Θ_Φ(ξ) = ∫₀^ξ √Φ′`.
    pub fn theta(&self, x: f64) -> f64 {
        let s = self.scale.sqrt();
        if let Some(c) = self.closed() {
            return s * c.theta(x);
        }
        let last = self.nodes.len() - 1;
        if x <= 0.0 {
            return s * self.raw_dphi(0.0).sqrt() * x;
        }
        if x >= self.nodes[last].rho {
            return s * (self.theta_nodes[last] + self.raw_dphi(x).max(0.0).sqrt() * (x - self.nodes[last].rho));
        }
        let i = self.locate(x);
        let a = self.nodes[i].rho;
        let partial = match self.interpolation {
            Interpolation::PiecewiseLinear => self.chord(i).sqrt() * (x - a),
            Interpolation::CubicHermite => {
                let (gx, gw) = gauss_legendre(8);
                let (mid, half) = (0.5 * (a + x), 0.5 * (x - a));
                gx.iter()
                    .zip(&gw)
                    .map(|(t, w)| w * self.raw_dphi(mid + half * t).max(0.0).sqrt())
                    .sum::<f64>()
                    * half
            }
        };
        s * (self.theta_nodes[i] + partial)
    }

    /// `log(Φ(ξ)/Φ(γ))`.
    pub fn log_ratio(&self, x: f64) -> f64 {
        (self.raw_phi(x) / self.raw_phi(self.gamma)).ln()
    }

    fn log_z(&self, x: f64) -> f64 {
        let last = self.nodes.len() - 1;
        let slope = |n: &GridNode| if n.rho == 0.0 { 1.0 } else { n.rho * n.dphi / n.phi };
        if x >= self.nodes[last].rho {
            let n = &self.nodes[last];
            return n.log_z + slope(n) * (x - n.rho);
        }
        let i = self.locate(x.max(0.0));
        let (p, q) = (&self.nodes[i], &self.nodes[i + 1]);
        hermite(p.rho, q.rho, p.log_z, q.log_z, slope(p), slope(q), x.max(0.0)).0
    }

    fn log_integral(&self, x: f64) -> f64 {
        let last = self.nodes.len() - 1;
        let i = if x >= self.nodes[last].rho { last - 1 } else { self.locate(x) };
        let p = &self.nodes[i];
        self.logint_nodes[i] + log_chord_integral(p.phi, self.chord(i), x - p.rho)
    }

    /// Relative entropy density `Ψ_{Φ,γ}`: `Ψ(γ) = 0`, `Ψ′ = log(Φ/Φ(γ))`.
    pub fn psi(&self, x: f64) -> f64 {
        if let Some(c) = self.closed() {
            return c.psi(x, self.gamma);
        }
        let x = x.max(0.0);
        match self.interpolation {
            Interpolation::PiecewiseLinear => {
                let lg = self.raw_phi(self.gamma).ln();
                self.log_integral(x) - self.log_integral(self.gamma) - (x - self.gamma) * lg
            }
            Interpolation::CubicHermite => {
                let phi = self.raw_phi(x);
                let first = if x > 0.0 { x * (phi / self.raw_phi(self.gamma)).ln() } else { 0.0 };
                first - (self.log_z(x) - self.log_z(self.gamma))
            }
        }
    }

    /// `Σ cell_volume·Ψ_{Φ,γ}(ρ)` over a field.
    pub fn relative_entropy(&self, field: &crate::field::DensityField) -> f64 {
        field.values.iter().map(|&r| self.psi(r)).sum::<f64>() * field.grid.cell_volume()
    }

    /// `ρ, φ, φ′` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,phi,dphi\n");
        for n in &self.nodes {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e}\n",
                n.rho,
                self.scale * n.phi,
                self.scale * n.dphi
            ));
        }
        s
    }
}

/// `∫₀^w log(p + b s) ds` for `p ≥ 0`, `b > 0`.
fn log_chord_integral(p: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let q = p + b * w;
    let f = |v: f64| if v > 0.0 { v * v.ln() - v } else { 0.0 };
    (f(q) - f(p)) / b
}

/// Cubic Hermite value and derivative on `[x0, x1]`.
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let deriv = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
    (value, deriv)
}

/// Evenly spaced density grid `lo, lo + step, …, hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
