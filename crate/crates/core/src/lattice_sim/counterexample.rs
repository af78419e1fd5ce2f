//! Radial profiles with bounded oscillation and small `Ḣ¹` norm.
//!
//! Both profiles are built from a cutoff `ψ` with `ψ(r) = r` on a core
//! `[δ′, δ]`, a lower ramp on `[δ′/2, δ′]` (so `ψ(0) = 3δ′/4`) and an upper
//! ramp on `[δ, 2δ]` (so `ψ(∞) = 3δ/2`), each with `0 ≤ ψ′ ≤ 1` and
//! `ψ ≥ r/2` where `ψ′ ≠ 0`. In two dimensions the relevant radii are far
//! below `f64` range, so everything is carried in `log r` and the norms are
//! computed by quadrature in the phase variable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::profile::ProfileSpec;
use super::SimError;
use crate::numerics::{integrate, smooth_step};
use crate::rates::NonlinearityModel;

fn half() -> [f64; 3] {
    [0.5; 3]
}

fn default_extra_cycles() -> u32 {
    50
}

fn default_panels() -> usize {
    8
}

fn default_cycles() -> f64 {
    10.0
}

/// `∫₀^x S` for the smooth step `S`.
fn step_integral(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let capped = x.min(1.0);
    integrate(smooth_step, 0.0, capped, 8, 8) + (x - capped)
}

/// Lower ramp shape on `τ ∈ [½, 1]`: `p(½) = ¾`, `p(1) = 1`, `p′(1) = 1`.
fn lower_ramp(tau: f64) -> (f64, f64) {
    let t = 2.0 * (tau - 0.5);
    (0.75 + 0.5 * step_integral(t), smooth_step(t))
}

/// Upper ramp shape on `τ ∈ [1, 2]`: `q(1) = 1`, `q′(1) = 1`, `q(2) = 3/2`.
fn upper_ramp(tau: f64) -> (f64, f64) {
    let t = tau - 1.0;
    (tau - step_integral(t), 1.0 - smooth_step(t))
}

/// Composite Gauss rule (8 points per panel).
fn gauss<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    integrate(f, a, b, panels.max(1), 8)
}

/// `(√φ)′(u)²`.
fn fisher_factor(model: &NonlinearityModel, u: f64) -> f64 {
    let f = model.dphi(u) / (2.0 * model.sqrt_phi(u));
    f * f
}

/// Two-dimensional profile `u = γ(1 + ½ sin |log ψ(|x|)|^{1/4})` with
/// `ψ(∞) = e^{−(nπ)⁴}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleD2 {
    pub gamma: f64,
    pub n: u32,
    /// Full phase cycles in the core beyond the first.
    #[serde(default = "default_extra_cycles")]
    pub extra_cycles: u32,
    #[serde(default = "half")]
    pub center: [f64; 3],
    #[serde(default = "default_panels")]
    pub panels_per_cycle: usize,
}

impl CounterexampleD2 {
    pub fn new(gamma: f64, n: u32) -> Self {
        CounterexampleD2 {
            gamma,
            n,
            extra_cycles: default_extra_cycles(),
            center: half(),
            panels_per_cycle: default_panels(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut failed = Vec::new();
        if !(self.gamma > 0.0) {
            failed.push(format!("γ = {} must be positive", self.gamma));
        }
        if self.n < 1 {
            failed.push("n must be at least 1".to_string());
        }
        if self.panels_per_cycle < 1 {
            failed.push("panels_per_cycle must be at least 1".to_string());
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(SimError::Validation(failed.join("; ")))
        }
    }

    /// `log ψ(∞) = −(nπ)⁴`.
    pub fn log_psi_inf(&self) -> f64 {
        -(self.n as f64 * PI).powi(4)
    }

    pub fn log_delta(&self) -> f64 {
        self.log_psi_inf() - 1.5f64.ln()
    }

    /// Phase `s = |log ψ|^{1/4}` at `δ`.
    pub fn s_delta(&self) -> f64 {
        (-self.log_delta()).powf(0.25)
    }

    pub fn s_delta_prime(&self) -> f64 {
        self.s_delta() + 2.0 * PI * (1 + self.extra_cycles) as f64
    }

    pub fn log_delta_prime(&self) -> f64 {
        -self.s_delta_prime().powi(4)
    }

    /// Phase as a function of `log r`.
    pub fn phase_at_log_radius(&self, log_r: f64) -> Option<f64> {
        let (ld, ldp) = (self.log_delta(), self.log_delta_prime());
        let big_l = -ld;
        let big_lp = -ldp;
        if log_r >= ld + 2f64.ln() {
            None
        } else if log_r >= ld {
            let (q, _) = upper_ramp((log_r - ld).exp());
            Some((big_l - q.ln()).powf(0.25))
        } else if log_r >= ldp {
            Some((-log_r).powf(0.25))
        } else if log_r >= ldp - 2f64.ln() {
            let (p, _) = lower_ramp((log_r - ldp).exp());
            Some((big_lp - p.ln()).powf(0.25))
        } else {
            Some((big_lp - 0.75f64.ln()).powf(0.25))
        }
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        let log_r = if r > 0.0 { r.ln() } else { f64::NEG_INFINITY };
        match self.phase_at_log_radius(log_r) {
            // ψ = ψ(∞): the phase is nπ and u = γ exactly.
            None => self.gamma,
            Some(s) => self.gamma * (1.0 + 0.5 * s.sin()),
        }
    }

    fn u_of_phase(&self, s: f64) -> f64 {
        self.gamma * (1.0 + 0.5 * s.sin())
    }

    /// `2π ∫|u′(r)|² w(u) r dr` for a weight `w` of the profile value.
    fn radial_energy<W: Fn(f64) -> f64>(&self, weight: W) -> f64 {
        let g2 = self.gamma * self.gamma;
        let (ld, ldp) = (self.log_delta(), self.log_delta_prime());
        let ramp = |big_l: f64, shape: fn(f64) -> (f64, f64), a: f64, b: f64| {
            gauss(
                |tau| {
                    let (p, dp) = shape(tau);
                    let s = (big_l - p.ln()).powf(0.25);
                    let c = s.cos();
                    g2 / 64.0 * c * c * s.powi(-6) * dp * dp * tau / (p * p) * weight(self.u_of_phase(s))
                },
                a,
                b,
                32,
            )
        };
        let upper = ramp(-ld, upper_ramp, 1.0, 2.0);
        let lower = ramp(-ldp, lower_ramp, 0.5, 1.0);
        let (s0, s1) = (self.s_delta(), self.s_delta_prime());
        let panels = ((s1 - s0) / (2.0 * PI) * self.panels_per_cycle as f64).ceil() as usize;
        let core = gauss(
            |s| {
                let c = s.cos();
                g2 / 16.0 * c * c / (s * s * s) * weight(self.u_of_phase(s))
            },
            s0,
            s1,
            panels,
        );
        2.0 * PI * (upper + core + lower)
    }

    /// `‖∇u‖²_{L²}`.
    pub fn grad_sq(&self) -> f64 {
        self.radial_energy(|_| 1.0)
    }

    /// `D(u) = ∫|∇φ^½(u)|²`.
    pub fn dissipation(&self, model: &NonlinearityModel) -> f64 {
        self.radial_energy(|u| fisher_factor(model, u))
    }

    /// Lattice-scale stand-in with the same range `[γ/2, 3γ/2]`, the same
    /// phase at infinity, and a phase winding `cycles` times in `log r`
    /// between `r_out` and `r_in`.
    pub fn lattice_realization(&self, r_out: f64, r_in: f64, cycles: f64) -> ProfileSpec {
        ProfileSpec::Oscillating {
            gamma: self.gamma,
            center: self.center,
            r_out,
            r_in,
            phase_start: self.n as f64 * PI,
            cycles,
        }
    }
}

/// Three-dimensional profile `u = (γ/2)(2 + sin ψ(|x|)^{−α})`,
/// `0 < α < ½`, with `ψ(∞) = (kπ)^{−1/α}` so that `u = γ` far out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleD3 {
    pub gamma: f64,
    pub alpha: f64,
    pub k: u32,
    /// Phase cycles across the core.
    #[serde(default = "default_cycles")]
    pub cycles: f64,
    #[serde(default = "half")]
    pub center: [f64; 3],
    #[serde(default = "default_panels")]
    pub panels_per_cycle: usize,
}

impl CounterexampleD3 {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut failed = Vec::new();
        if !(self.gamma > 0.0) {
            failed.push(format!("γ = {} must be positive", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            failed.push(format!("α = {} must satisfy 0 < α < (d−2)/2 = 1/2", self.alpha));
        }
        if self.k < 1 {
            failed.push("k must be at least 1".to_string());
        }
        if !(self.cycles >= 1.0) {
            failed.push(format!("cycles = {} must be at least 1", self.cycles));
        }
        if self.panels_per_cycle < 1 {
            failed.push("panels_per_cycle must be at least 1".to_string());
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(SimError::Validation(failed.join("; ")))
        }
    }

    pub fn psi_inf(&self) -> f64 {
        (self.k as f64 * PI).powf(-1.0 / self.alpha)
    }

    pub fn delta(&self) -> f64 {
        self.psi_inf() / 1.5
    }

    fn v_delta(&self) -> f64 {
        self.delta().powf(-self.alpha)
    }

    fn v_delta_prime(&self) -> f64 {
        self.v_delta() + 2.0 * PI * self.cycles
    }

    pub fn delta_prime(&self) -> f64 {
        self.v_delta_prime().powf(-1.0 / self.alpha)
    }

    fn psi(&self, r: f64) -> Option<f64> {
        let (d, dp) = (self.delta(), self.delta_prime());
        if r >= 2.0 * d {
            None
        } else if r >= d {
            Some(d * upper_ramp(r / d).0)
        } else if r >= dp {
            Some(r)
        } else if r >= 0.5 * dp {
            Some(dp * lower_ramp(r / dp).0)
        } else {
            Some(0.75 * dp)
        }
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        match self.psi(r) {
            None => self.gamma,
            Some(p) => 0.5 * self.gamma * (2.0 + p.powf(-self.alpha).sin()),
        }
    }

    fn u_of_phase(&self, v: f64) -> f64 {
        0.5 * self.gamma * (2.0 + v.sin())
    }

    /// `4π ∫|u′(r)|² w(u) r² dr`.
    fn radial_energy<W: Fn(f64) -> f64>(&self, weight: W) -> f64 {
        let (g2, a) = (self.gamma * self.gamma, self.alpha);
        let ramp = |scale: f64, shape: fn(f64) -> (f64, f64), lo: f64, hi: f64| {
            gauss(
                |tau| {
                    let (q, dq) = shape(tau);
                    let v = (scale * q).powf(-a);
                    let c = v.cos();
                    g2 * a * a / 4.0 * scale * c * c * v * v * dq * dq * tau * tau / (q * q)
                        * weight(self.u_of_phase(v))
                },
                lo,
                hi,
                32,
            )
        };
        let upper = ramp(self.delta(), upper_ramp, 1.0, 2.0);
        let lower = ramp(self.delta_prime(), lower_ramp, 0.5, 1.0);
        let (v0, v1) = (self.v_delta(), self.v_delta_prime());
        let panels = ((v1 - v0) / (2.0 * PI) * self.panels_per_cycle as f64).ceil() as usize;
        let core = gauss(
            |v| {
                let c = v.cos();
                g2 * a / 4.0 * c * c * v.powf(1.0 - 1.0 / a) * weight(self.u_of_phase(v))
            },
            v0,
            v1,
            panels,
        );
        4.0 * PI * (upper + core + lower)
    }

    pub fn grad_sq(&self) -> f64 {
        self.radial_energy(|_| 1.0)
    }

    pub fn dissipation(&self, model: &NonlinearityModel) -> f64 {
        self.radial_energy(|u| fisher_factor(model, u))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dimension")]
pub enum CounterexampleParams {
    D2 { n: u32, extra_cycles: u32 },
    D3 { alpha: f64, k: u32, cycles: f64 },
}

/// Profile with its computed norms and oscillation diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub profile: ProfileSpec,
    pub grad_sq: f64,
    pub dissipation: f64,
    pub sup_u: f64,
    pub inf_u: f64,
    /// `log ψ(∞)`.
    pub log_psi_inf: f64,
    /// `‖∇u‖²·√|log ψ(∞)|` (two dimensions only).
    pub scaled_grad_sq: Option<f64>,
    /// `log` of radii in the core where `u = 3γ/2` and `u = γ/2`.
    pub log_radius_of_max: f64,
    pub log_radius_of_min: f64,
    pub log_delta: f64,
    pub log_delta_prime: f64,
}

/// First `s ≥ s0` with `s ≡ target (mod 2π)`.
fn next_congruent(s0: f64, target: f64) -> f64 {
    target + 2.0 * PI * ((s0 - target) / (2.0 * PI)).ceil()
}

/// Builds the counterexample profile in `d ∈ {2, 3}` and evaluates
/// `‖∇u‖²` and `D(u)` by quadrature.
pub fn counterexample_profile(
    d: usize,
    gamma: f64,
    params: CounterexampleParams,
    model: &NonlinearityModel,
) -> Result<CounterexampleReport, SimError> {
    match (d, params) {
        (2, CounterexampleParams::D2 { n, extra_cycles }) => {
            let p = CounterexampleD2 { extra_cycles, ..CounterexampleD2::new(gamma, n) };
            p.validate()?;
            let (s0, s1) = (p.s_delta(), p.s_delta_prime());
            let s_max = next_congruent(s0, 0.5 * PI);
            let s_min = next_congruent(s0, 1.5 * PI);
            // The core spans at least 2π of phase, so both extremes of the sine
            // are attained there.
            debug_assert!(s_max <= s1 && s_min <= s1);
            let grad_sq = p.grad_sq();
            Ok(CounterexampleReport {
                grad_sq,
                dissipation: p.dissipation(model),
                sup_u: 1.5 * gamma,
                inf_u: 0.5 * gamma,
                log_psi_inf: p.log_psi_inf(),
                scaled_grad_sq: Some(grad_sq * (-p.log_psi_inf()).sqrt()),
                log_radius_of_max: -s_max.powi(4),
                log_radius_of_min: -s_min.powi(4),
                log_delta: p.log_delta(),
                log_delta_prime: p.log_delta_prime(),
                profile: ProfileSpec::CounterexampleD2(p),
            })
        }
        (3, CounterexampleParams::D3 { alpha, k, cycles }) => {
            let p = CounterexampleD3 {
                gamma,
                alpha,
                k,
                cycles,
                center: half(),
                panels_per_cycle: default_panels(),
            };
            p.validate()?;
            let v0 = p.v_delta();
            let v_max = next_congruent(v0, 0.5 * PI);
            let v_min = next_congruent(v0, 1.5 * PI);
            Ok(CounterexampleReport {
                grad_sq: p.grad_sq(),
                dissipation: p.dissipation(model),
                sup_u: 1.5 * gamma,
                inf_u: 0.5 * gamma,
                log_psi_inf: p.psi_inf().ln(),
                scaled_grad_sq: None,
                log_radius_of_max: -v_max.ln() / alpha,
                log_radius_of_min: -v_min.ln() / alpha,
                log_delta: p.delta().ln(),
                log_delta_prime: p.delta_prime().ln(),
                profile: ProfileSpec::CounterexampleD3(p),
            })
        }
        _ => Err(SimError::Validation(format!("dimension {d} does not match the parameter set {params:?}"))),
    }
}

/// Sites for the two-block experiment: `x` on the high plateau, `y` on the
/// low one, both judged on their `ℓ`-boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBlockSites {
    pub x: usize,
    pub y: usize,
    /// `min u` over the box around `x`.
    pub box_min_at_x: f64,
    /// `max u` over the box around `y`.
    pub box_max_at_y: f64,
    /// `|x − y|_∞` in lattice units.
    pub separation: usize,
    /// `box_min_at_x > 3γ/2 − θ` and `box_max_at_y < γ/2 + θ`.
    pub plateau_conditions: bool,
}

/// Picks `x` maximising the box minimum of `u` and, within `|x − y|_∞ ≤ Nε`,
/// `y` minimising the box maximum.
pub fn select_two_block_sites(
    u: &[f64],
    lattice: super::Lattice,
    ell: usize,
    eps: f64,
    gamma: f64,
    theta: f64,
) -> TwoBlockSites {
    let grid = lattice.grid();
    let l = lattice.l;
    let d = lattice.d;
    let box_extreme = |x: usize, take_min: bool| {
        let c = grid.coords(x);
        let w = 2 * ell + 1;
        let span = |a: usize| if a < d { w } else { 1 };
        let mut best = if take_min { f64::INFINITY } else { f64::NEG_INFINITY };
        for k in 0..span(2) {
            for j in 0..span(1) {
                for i in 0..span(0) {
                    let mut cc = c;
                    let offs = [i, j, k];
                    for a in 0..d {
                        cc[a] = (c[a] + l - ell + offs[a]) % l;
                    }
                    let v = u[grid.index(cc)];
                    best = if take_min { best.min(v) } else { best.max(v) };
                }
            }
        }
        best
    };
    let dist = |a: usize, b: usize| {
        let (ca, cb) = (grid.coords(a), grid.coords(b));
        (0..d)
            .map(|i| {
                let t = ca[i].abs_diff(cb[i]);
                t.min(l - t)
            })
            .max()
            .unwrap_or(0)
    };
    let (mut x, mut best_x) = (0, f64::NEG_INFINITY);
    for s in 0..lattice.n_sites() {
        if u[s] <= best_x {
            continue;
        }
        let m = box_extreme(s, true);
        if m > best_x {
            best_x = m;
            x = s;
        }
    }
    let reach = (lattice.l as f64 * eps + 1e-9).floor() as usize;
    let (mut y, mut best_y) = (x, f64::INFINITY);
    for s in 0..lattice.n_sites() {
        if u[s] >= best_y || dist(s, x) > reach {
            continue;
        }
        let m = box_extreme(s, false);
        if m < best_y {
            best_y = m;
            y = s;
        }
    }
    TwoBlockSites {
        x,
        y,
        box_min_at_x: best_x,
        box_max_at_y: best_y,
        separation: dist(x, y),
        plateau_conditions: best_x > 1.5 * gamma - theta && best_y < 0.5 * gamma + theta,
    }
}
