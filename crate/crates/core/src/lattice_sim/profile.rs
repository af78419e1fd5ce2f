use std::collections::HashMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::counterexample::{CounterexampleD2, CounterexampleD3};
use super::lattice::{Configuration, Lattice};
use super::SimError;
use crate::numerics::{gauss_legendre, smooth_step, smooth_step_derivative};
use crate::rates::{draw, EquilibriumLaw, JumpRate, NonlinearityModel};

fn half() -> [f64; 3] {
    [0.5; 3]
}

/// Macroscopic density profile `u` on the unit torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    /// `background + amplitude·β(|x − c|/width)` with
    /// `β(s) = exp(1 − 1/(1 − s²))` on `s < 1`.
    Bump {
        background: f64,
        amplitude: f64,
        #[serde(default = "half")]
        center: [f64; 3],
        width: f64,
    },
    /// `background + amplitude·sin(2π·mode·x₁)`.
    Sine {
        background: f64,
        amplitude: f64,
        mode: usize,
    },
    /// `base + slope·x₁` on `[0, 1)`; jumps at the wrap.
    Ramp {
        base: f64,
        slope: f64,
    },
    /// `γ(1 + ½ sin σ(|x − c|))` with a phase that winds `cycles` times
    /// between `r_out` and `r_in`, monotone in `log r`; `u = γ` outside
    /// `r_out` when `phase_start` is a multiple of `π`.
    Oscillating {
        gamma: f64,
        #[serde(default = "half")]
        center: [f64; 3],
        r_out: f64,
        r_in: f64,
        phase_start: f64,
        cycles: f64,
    },
    CounterexampleD2(CounterexampleD2),
    CounterexampleD3(CounterexampleD3),
    /// Piecewise-constant cell values on an `m^d` grid.
    Tabulated {
        m: usize,
        values: Vec<f64>,
    },
}

/// Minimal-image distance on the unit torus.
pub(crate) fn torus_radius(x: [f64; 3], c: [f64; 3], d: usize) -> (f64, [f64; 3]) {
    let mut diff = [0.0; 3];
    let mut r2 = 0.0;
    for a in 0..d {
        let mut t = x[a] - c[a];
        t -= t.round();
        diff[a] = t;
        r2 += t * t;
    }
    (r2.sqrt(), diff)
}

fn bump(s: f64) -> (f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let v = (1.0 - 1.0 / q).exp();
    (v, v * (-2.0 * s / (q * q)))
}

impl ProfileSpec {
    /// `u(x)` for a point of `[0,1)^d`.
    pub fn eval(&self, x: [f64; 3], d: usize) -> f64 {
        self.value_and_grad(x, d).0
    }

    /// `u(x)` and `∇u(x)`.
    pub fn value_and_grad(&self, x: [f64; 3], d: usize) -> (f64, [f64; 3]) {
        let radial = |c: [f64; 3], f: &dyn Fn(f64) -> (f64, f64)| {
            let (r, diff) = torus_radius(x, c, d);
            let (v, dv) = f(r);
            let mut g = [0.0; 3];
            if r > 0.0 {
                for a in 0..d {
                    g[a] = dv * diff[a] / r;
                }
            }
            (v, g)
        };
        match self {
            ProfileSpec::Constant { value } => (*value, [0.0; 3]),
            ProfileSpec::Bump { background, amplitude, center, width } => radial(*center, &|r| {
                let (b, db) = bump(r / width);
                (background + amplitude * b, amplitude * db / width)
            }),
            ProfileSpec::Sine { background, amplitude, mode } => {
                let k = 2.0 * PI * *mode as f64;
                let mut g = [0.0; 3];
                g[0] = amplitude * k * (k * x[0]).cos();
                (background + amplitude * (k * x[0]).sin(), g)
            }
            ProfileSpec::Ramp { base, slope } => {
                let mut g = [0.0; 3];
                g[0] = *slope;
                (base + slope * x[0], g)
            }
            ProfileSpec::Oscillating { gamma, center, r_out, r_in, phase_start, cycles } => radial(*center, &|r| {
                let span = (r_out / r_in).ln();
                let t = if r > 0.0 { (r_out / r).ln() / span } else { 1.0 };
                let sigma = phase_start + 2.0 * PI * cycles * smooth_step(t);
                let dsigma = if r > 0.0 {
                    2.0 * PI * cycles * smooth_step_derivative(t) * (-1.0 / (r * span))
                } else {
                    0.0
                };
                (gamma * (1.0 + 0.5 * sigma.sin()), gamma * 0.5 * sigma.cos() * dsigma)
            }),
            ProfileSpec::CounterexampleD2(p) => radial(p.center, &|r| (p.eval_radius(r), 0.0)),
            ProfileSpec::CounterexampleD3(p) => radial(p.center, &|r| (p.eval_radius(r), 0.0)),
            ProfileSpec::Tabulated { m, values } => {
                let mut idx = 0;
                for a in (0..d).rev() {
                    let i = ((x[a].rem_euclid(1.0)) * *m as f64).floor() as usize;
                    idx = idx * m + i.min(m - 1);
                }
                (values[idx], [0.0; 3])
            }
        }
    }

    /// Basic range checks.
    pub fn validate(&self, d: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidArgument(m));
        match self {
            ProfileSpec::Tabulated { m, values } if values.len() != m.pow(d as u32) => {
                bad(format!("tabulated profile has {} values for {m}^{d} cells", values.len()))
            }
            ProfileSpec::Bump { width, .. } if !(*width > 0.0 && *width <= 0.5) => {
                bad(format!("bump width {width} must lie in (0, 0.5]"))
            }
            ProfileSpec::Oscillating { r_out, r_in, .. } if !(*r_in > 0.0 && r_in < r_out && *r_out <= 0.5) => {
                bad(format!("oscillating profile needs 0 < r_in < r_out ≤ 0.5, got {r_in}, {r_out}"))
            }
            _ => Ok(()),
        }
    }

    /// Profile sampled at lattice positions `x/N`.
    pub fn on_lattice(&self, lattice: &Lattice) -> Vec<f64> {
        (0..lattice.n_sites()).map(|i| self.eval(lattice.position(i), lattice.d)).collect()
    }
}

/// Product measure with site marginals `ν_{u(x/N)}`, precomputed per
/// distinct density value.
#[derive(Clone, Debug)]
pub struct LocalEquilibrium {
    pub lattice: Lattice,
    pub densities: Vec<f64>,
    cdfs: Vec<Vec<f64>>,
    site_law: Vec<u32>,
}

impl LocalEquilibrium {
    pub fn new(profile: &ProfileSpec, lattice: Lattice, rate: &JumpRate, tol: f64) -> Result<Self, SimError> {
        profile.validate(lattice.d)?;
        Self::from_densities(profile.on_lattice(&lattice), lattice, rate, tol)
    }

    pub fn from_densities(densities: Vec<f64>, lattice: Lattice, rate: &JumpRate, tol: f64) -> Result<Self, SimError> {
        if densities.len() != lattice.n_sites() {
            return Err(SimError::InvalidArgument("density count does not match lattice".into()));
        }
        let mut index: HashMap<u64, u32> = HashMap::new();
        let mut cdfs = Vec::new();
        let mut site_law = Vec::with_capacity(densities.len());
        for &u in &densities {
            if !(u >= 0.0 && u.is_finite()) {
                return Err(SimError::InvalidArgument(format!("profile value {u} is not a density")));
            }
            let id = match index.get(&u.to_bits()) {
                Some(&id) => id,
                None => {
                    let law = EquilibriumLaw::at_density(rate, u, tol)?;
                    cdfs.push(law.cdf());
                    let id = (cdfs.len() - 1) as u32;
                    index.insert(u.to_bits(), id);
                    id
                }
            };
            site_law.push(id);
        }
        Ok(LocalEquilibrium { lattice, densities, cdfs, site_law })
    }

    pub fn sample(&self, seed: u64) -> Configuration {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let occupancies = self.site_law.iter().map(|&id| draw(&self.cdfs[id as usize], &mut rng)).collect();
        Configuration { lattice: self.lattice, occupancies }
    }
}

/// Independent draw with site `x` distributed as `ν_{u(x/N)}`.
pub fn local_equilibrium_sample(
    profile: &ProfileSpec,
    lattice: Lattice,
    rate: &JumpRate,
    seed: u64,
) -> Result<Configuration, SimError> {
    Ok(LocalEquilibrium::new(profile, lattice, rate, 1e-12)?.sample(seed))
}

/// Dirichlet form of a local-equilibrium density against its continuum
/// counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletReport {
    /// `N²·𝔡_{x, x+e_a}` at index `x·d + a`.
    pub per_edge: Vec<f64>,
    /// `N^{2−d} Σ 𝔡_{x,y}`.
    pub total: f64,
    /// `D(u) = ∫|∇φ^½(u)|²` by quadrature.
    pub continuum: f64,
    pub relative_gap: f64,
}

/// Per-edge `(N(√φ(u(x/N)) − √φ(u(y/N))))²`, their normalised total and
/// the continuum `D(u)`.
pub fn dirichlet_local_eq(profile: &ProfileSpec, lattice: Lattice, model: &NonlinearityModel) -> DirichletReport {
    let d = lattice.d;
    let n = lattice.l as f64;
    let roots: Vec<f64> = profile.on_lattice(&lattice).iter().map(|&u| model.sqrt_phi(u)).collect();
    let mut per_edge = vec![0.0; lattice.n_sites() * d];
    let mut sum = 0.0;
    for x in 0..lattice.n_sites() {
        for a in 0..d {
            let y = lattice.neighbor(x, a, true);
            let v = (n * (roots[x] - roots[y])).powi(2);
            per_edge[x * d + a] = v;
            sum += v;
        }
    }
    let total = sum / lattice.n_sites() as f64;
    let continuum = continuum_dissipation(profile, d, model, if d == 1 { 512 } else { 128 });
    let relative_gap = if continuum > 0.0 { (total - continuum).abs() / continuum } else { total.abs() };
    DirichletReport { per_edge, total, continuum, relative_gap }
}

/// `∫_{[0,1)^d} |∇φ^½(u)|²` by tensor Gauss–Legendre (4 points per panel)
/// using the profile's analytic gradient.
pub fn continuum_dissipation(profile: &ProfileSpec, d: usize, model: &NonlinearityModel, panels: usize) -> f64 {
    match profile {
        ProfileSpec::CounterexampleD2(p) => return p.dissipation(model),
        ProfileSpec::CounterexampleD3(p) => return p.dissipation(model),
        _ => {}
    }
    let (gx, gw) = gauss_legendre(4);
    let h = 1.0 / panels as f64;
    let pts: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let mid = (p as f64 + 0.5) * h;
            gx.iter().zip(&gw).map(move |(x, w)| (mid + 0.5 * h * x, 0.5 * h * w)).collect::<Vec<_>>()
        })
        .collect();
    let integrand = |x: [f64; 3]| {
        let (u, g) = profile.value_and_grad(x, d);
        let g2: f64 = g.iter().take(d).map(|v| v * v).sum();
        if g2 == 0.0 {
            return 0.0;
        }
        let root = model.sqrt_phi(u);
        let factor = model.dphi(u) / (2.0 * root);
        factor * factor * g2
    };
    let mut total = 0.0;
    match d {
        1 => {
            for &(x, w) in &pts {
                total += w * integrand([x, 0.0, 0.0]);
            }
        }
        2 => {
            for &(y, wy) in &pts {
                for &(x, wx) in &pts {
                    total += wx * wy * integrand([x, y, 0.0]);
                }
            }
        }
        _ => {
            for &(z, wz) in &pts {
                for &(y, wy) in &pts {
                    for &(x, wx) in &pts {
                        total += wx * wy * wz * integrand([x, y, z]);
                    }
                }
            }
        }
    }
    total
}
