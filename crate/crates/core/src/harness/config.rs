use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::lattice_sim::{CounterexampleParams, ObservableKind, ProfileSpec};
use crate::rate_functional::{DiffusionConvention, TimeDifference};
use crate::rates::{build_nonlinearity, linspace, JumpRate, MomentWeight, NonlinearityModel};
use crate::skeleton_pde::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Phi,
    Simulate,
    HydroCheck,
    SupexCheck,
    TwoBlock,
    Counterexample,
    SolveSkeleton,
    Rate,
    Roundtrip,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Phi,
        Experiment::Simulate,
        Experiment::HydroCheck,
        Experiment::SupexCheck,
        Experiment::TwoBlock,
        Experiment::Counterexample,
        Experiment::SolveSkeleton,
        Experiment::Rate,
        Experiment::Roundtrip,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Phi => "phi",
            Experiment::Simulate => "simulate",
            Experiment::HydroCheck => "hydro-check",
            Experiment::SupexCheck => "supex-check",
            Experiment::TwoBlock => "two-block",
            Experiment::Counterexample => "counterexample",
            Experiment::SolveSkeleton => "solve-skeleton",
            Experiment::Rate => "rate",
            Experiment::Roundtrip => "roundtrip",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment `{s}`")))
    }
}

/// Jump rate as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateModelSpec {
    Linear,
    Constant,
    OddBump,
    Saturating {
        cap: usize,
        slope: f64,
    },
    Table {
        name: String,
        table: Vec<f64>,
        tail_slope: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tail_pattern: Vec<f64>,
    },
}

impl RateModelSpec {
    pub fn build(&self) -> Result<JumpRate, HarnessError> {
        Ok(match self {
            RateModelSpec::Linear => JumpRate::linear(),
            RateModelSpec::Constant => JumpRate::constant(),
            RateModelSpec::OddBump => JumpRate::odd_bump(),
            RateModelSpec::Saturating { cap, slope } => JumpRate::saturating(*cap, *slope)?,
            RateModelSpec::Table { name, table, tail_slope, tail_pattern } => {
                JumpRate::new(name.clone(), table.clone(), *tail_slope, tail_pattern.clone())?
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Fugacity inversion and relative-entropy tolerance.
    pub fugacity: f64,
    /// Allowed mismatch between the two routes to `φ′`.
    pub phi_check: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { fugacity: 1e-12, phi_check: 1e-6 }
    }
}

/// Density grid the nonlinearity is tabulated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelGrid {
    pub rho_max: f64,
    pub points: usize,
    pub gamma: f64,
}

impl Default for ModelGrid {
    fn default() -> Self {
        ModelGrid { rho_max: 8.0, points: 401, gamma: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConventionFlags {
    /// `∂ₜρ = ½ΔΦ(ρ)` with rates halved on the lattice, `J` with `(½, ½)`.
    pub half_diffusion: bool,
}

impl ConventionFlags {
    pub fn diffusion(&self) -> DiffusionConvention {
        if self.half_diffusion {
            DiffusionConvention::half()
        } else {
            DiffusionConvention::generator()
        }
    }

    pub fn rate_multiplier(&self) -> f64 {
        if self.half_diffusion {
            0.5
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletSection {
    pub d: usize,
    pub l: usize,
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<DirichletSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub d: usize,
    pub l: usize,
    pub t_end: f64,
    pub snapshots: usize,
    pub eps: f64,
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroSection {
    pub d: usize,
    pub sizes: Vec<usize>,
    pub t_end: f64,
    pub eps: f64,
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupexSection {
    pub d: usize,
    pub sizes: Vec<usize>,
    pub t_end: f64,
    pub eps: f64,
    pub snapshots: usize,
    pub observable: ObservableKind,
    /// `H(t, x) = cos(2π·test_mode·x₁)`.
    pub test_mode: u32,
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBlockSection {
    pub l: usize,
    pub gamma: f64,
    pub n: u32,
    /// Lattice realisation of the profile: phase winding between the radii.
    pub r_out: f64,
    pub r_in: f64,
    pub cycles: f64,
    pub ell: usize,
    pub beta: f64,
    pub theta: f64,
    pub eps: f64,
    /// Local-equilibrium samples per seed.
    pub samples: usize,
    #[serde(default)]
    pub weight: MomentWeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSection {
    pub gamma: f64,
    pub cases: Vec<CounterexampleParams>,
}

/// `H(t, x) = amplitude·(1 + growth·t)·Σ_a cos(2π·mode·x_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub amplitude: f64,
    pub mode: u32,
    #[serde(default)]
    pub growth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSection {
    pub d: usize,
    pub m: usize,
    pub t_end: f64,
    /// Defaults to the explicit stability limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub viscosity: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    pub profile: ProfileSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default = "default_xi_bins")]
    pub xi_bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub d: usize,
    pub m: usize,
    pub t_end: f64,
    pub profile: ProfileSpec,
    pub potential: PotentialSpec,
    pub n_space: usize,
    pub time_modes: usize,
    pub bump_width: f64,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub difference: TimeDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundtripSection {
    pub m: usize,
    pub t_end: f64,
    /// Largest coefficient of the random potentials.
    pub amplitude: f64,
    pub profile: ProfileSpec,
}

fn one() -> usize {
    1
}

fn default_xi_bins() -> usize {
    40
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

/// One experiment run, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    pub rate: RateModelSpec,
    #[serde(default)]
    pub model: ModelGrid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub convention: ConventionFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro: Option<HydroSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supex: Option<SupexSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_block: Option<TwoBlockSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<SkeletonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "rate_functional")]
    pub rate_fn: Option<RateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundtripSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// Canonical TOML. A file written here loads and saves back to the same
    /// bytes.
    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    fn missing(&self, section: &str) -> HarnessError {
        HarnessError::Config(format!("experiment `{}` needs a [{section}] section", self.experiment))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("`seeds` must list at least one seed".into()));
        }
        let present = match self.experiment {
            Experiment::Phi => self.phi.is_some(),
            Experiment::Simulate => self.simulate.is_some(),
            Experiment::HydroCheck => self.hydro.is_some(),
            Experiment::SupexCheck => self.supex.is_some(),
            Experiment::TwoBlock => self.two_block.is_some(),
            Experiment::Counterexample => self.counterexample.is_some(),
            Experiment::SolveSkeleton => self.skeleton.is_some(),
            Experiment::Rate => self.rate_fn.is_some(),
            Experiment::Roundtrip => self.roundtrip.is_some(),
        };
        if !present {
            let name = match self.experiment {
                Experiment::Phi => "phi",
                Experiment::Simulate => "simulate",
                Experiment::HydroCheck => "hydro",
                Experiment::SupexCheck => "supex",
                Experiment::TwoBlock => "two_block",
                Experiment::Counterexample => "counterexample",
                Experiment::SolveSkeleton => "skeleton",
                Experiment::Rate => "rate_functional",
                Experiment::Roundtrip => "roundtrip",
            };
            return Err(self.missing(name));
        }
        if !(self.model.rho_max > 0.0) || self.model.points < 2 || !(self.model.gamma > 0.0) {
            return Err(HarnessError::Config("[model] needs rho_max > 0, points ≥ 2 and gamma > 0".into()));
        }
        if let Some(h) = &self.hydro {
            if h.sizes.len() < 2 || h.sizes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(HarnessError::Config("hydro.sizes must be increasing with at least two entries".into()));
            }
        }
        if let Some(s) = &self.supex {
            if s.sizes.len() < 2 || s.sizes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(HarnessError::Config("supex.sizes must be increasing with at least two entries".into()));
            }
        }
        Ok(())
    }

    pub fn jump_rate(&self) -> Result<JumpRate, HarnessError> {
        self.rate.build()
    }

    /// Tabulated `φ` for the configured rate on `[0, rho_max]`.
    pub fn nonlinearity(&self) -> Result<NonlinearityModel, HarnessError> {
        let rate = self.jump_rate()?;
        let grid = linspace(0.0, self.model.rho_max, self.model.points);
        Ok(build_nonlinearity(&rate, &grid, self.model.gamma, self.tolerances.phi_check)?)
    }
}
