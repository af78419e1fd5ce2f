use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lattice::{Configuration, Lattice, RateCache, SumTree};
use super::SimError;
use crate::rates::JumpRate;

/// Dynamics options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    /// Multiplies every jump rate. With the default 1 a site with `k`
    /// particles jumps along each of its `2d` directed edges at rate `λ(k)`.
    #[serde(default = "one")]
    pub rate_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { rate_multiplier: 1.0 }
    }
}

/// Exact continuous-time zero-range dynamics on a torus.
///
/// Times are macroscopic: microscopic time divided by `N²`.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: Configuration,
    tree: SumTree,
    cache: RateCache,
    rng: ChaCha8Rng,
    time: f64,
    /// Next event time, drawn but not yet executed.
    pending: Option<f64>,
    events: u64,
    n2: f64,
}

impl Simulator {
    pub fn new(rate: &JumpRate, init: Configuration, seed: u64, opts: SimOptions) -> Result<Self, SimError> {
        if !(opts.rate_multiplier > 0.0 && opts.rate_multiplier.is_finite()) {
            return Err(SimError::InvalidArgument(format!(
                "rate_multiplier must be positive, got {}",
                opts.rate_multiplier
            )));
        }
        let d = init.lattice.d;
        let mut cache = RateCache::new(rate, 2.0 * d as f64 * opts.rate_multiplier);
        let leaves: Vec<f64> = init.occupancies.iter().map(|&k| cache.get(k)).collect();
        let n = init.lattice.l as f64;
        Ok(Simulator {
            tree: SumTree::new(&leaves),
            config: init,
            cache,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            pending: None,
            events: 0,
            n2: n * n,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Root of the rate tree.
    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Sequential recomputation of the total exit rate, for drift checks.
    pub fn recompute_total_rate(&mut self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.config.occupancies.len() {
            s += self.cache.get(self.config.occupancies[i]);
        }
        s
    }

    /// Runs until macroscopic time `t_stop` (no event at exactly `t_stop`
    /// is executed).
    pub fn run_until(&mut self, t_stop: f64) -> Result<(), SimError> {
        loop {
            let total = self.tree.total();
            if total <= 0.0 {
                self.pending = None;
                self.time = self.time.max(t_stop);
                return Ok(());
            }
            let t_next = match self.pending {
                Some(t) => t,
                None => {
                    let u: f64 = self.rng.random();
                    let t = self.time - (1.0 - u).ln() / total / self.n2;
                    self.pending = Some(t);
                    t
                }
            };
            if t_next > t_stop {
                self.time = self.time.max(t_stop);
                return Ok(());
            }
            self.time = t_next;
            self.pending = None;
            self.jump()?;
        }
    }

    /// Executes exactly `n` events, ignoring time targets.
    pub fn run_events(&mut self, n: u64) -> Result<(), SimError> {
        for _ in 0..n {
            let total = self.tree.total();
            if total <= 0.0 {
                break;
            }
            let t = match self.pending.take() {
                Some(t) => t,
                None => {
                    let u: f64 = self.rng.random();
                    self.time - (1.0 - u).ln() / total / self.n2
                }
            };
            self.time = t;
            self.jump()?;
        }
        Ok(())
    }

    fn jump(&mut self) -> Result<(), SimError> {
        let total = self.tree.total();
        let x = loop {
            let u: f64 = self.rng.random::<f64>() * total;
            let x = self.tree.find(u);
            // Rounding can land on an empty leaf at an interval edge.
            if x < self.config.occupancies.len() && self.tree.leaf(x) > 0.0 {
                break x;
            }
        };
        let lattice = self.config.lattice;
        let dir = self.rng.random_range(0..2 * lattice.d);
        let y = lattice.neighbor(x, dir / 2, dir % 2 == 0);
        let occ = &mut self.config.occupancies;
        occ[y] = occ[y]
            .checked_add(1)
            .ok_or_else(|| SimError::Overflow(format!("site {y} exceeded the 32-bit occupancy range")))?;
        occ[x] -= 1;
        let (kx, ky) = (occ[x], occ[y]);
        let (rx, ry) = (self.cache.get(kx), self.cache.get(ky));
        self.tree.set(x, rx);
        self.tree.set(y, ry);
        self.events += 1;
        Ok(())
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }
}

/// Occupancy snapshots of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub lattice: Lattice,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<u32>>,
    pub seed: u64,
    pub event_count: u64,
}

impl Trajectory {
    pub fn snapshot(&self, i: usize) -> Configuration {
        Configuration { lattice: self.lattice, occupancies: self.snapshots[i].clone() }
    }

    /// Seed, event count and snapshot times.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "event_count": self.event_count,
            "times": self.times,
            "d": self.lattice.d,
            "L": self.lattice.l,
        })
    }
}

/// Simulates from `init` up to `t_end`, recording the configuration at each
/// time in `snapshot_times` (strictly increasing, within `[0, t_end]`).
pub fn simulate(
    rate: &JumpRate,
    init: &Configuration,
    t_end: f64,
    snapshot_times: &[f64],
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory, SimError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::InvalidArgument("snapshot times must be strictly increasing".into()));
    }
    if snapshot_times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return Err(SimError::InvalidArgument("snapshot times must lie in [0, t_end]".into()));
    }
    let mut sim = Simulator::new(rate, init.clone(), seed, opts)?;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        sim.run_until(t)?;
        snapshots.push(sim.config().occupancies.clone());
    }
    sim.run_until(t_end)?;
    Ok(Trajectory {
        lattice: init.lattice,
        times: snapshot_times.to_vec(),
        snapshots,
        seed,
        event_count: sim.events(),
    })
}

/// `n + 1` evenly spaced times on `[0, t_end]`.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}
