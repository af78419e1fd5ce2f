use serde::{Deserialize, Serialize};

use super::SimError;
use crate::field::Grid;
use crate::rates::JumpRate;

/// Default cap on `L^d`.
pub const DEFAULT_MAX_SITES: usize = 1 << 26;

/// Periodic `d`-dimensional torus with `L` sites per side; `N = L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub d: usize,
    pub l: usize,
}

impl Lattice {
    pub fn new(d: usize, l: usize) -> Result<Self, SimError> {
        Self::with_budget(d, l, DEFAULT_MAX_SITES)
    }

    pub fn with_budget(d: usize, l: usize, max_sites: usize) -> Result<Self, SimError> {
        if !(1..=3).contains(&d) {
            return Err(SimError::InvalidLattice(format!("dimension {d} not in 1..=3")));
        }
        if l < 4 {
            return Err(SimError::InvalidLattice(format!("L = {l} must be at least 4")));
        }
        match l.checked_pow(d as u32) {
            Some(n) if n <= max_sites => Ok(Lattice { d, l }),
            _ => Err(SimError::InvalidLattice(format!("{l}^{d} sites exceed the budget of {max_sites}"))),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    /// Same indexing as the cell grid with `m = L`.
    pub fn grid(&self) -> Grid {
        Grid::new(self.d, self.l)
    }

    /// Macroscopic position `x/N` of a site.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.grid().coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = c[a] as f64 / self.l as f64;
        }
        x
    }

    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> usize {
        self.grid().neighbor(idx, axis, forward)
    }
}

/// Binary sum tree over per-site exit rates. Every update recomputes the
/// ancestors from their children, so the root never accumulates drift.
#[derive(Clone, Debug)]
pub struct SumTree {
    cap: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(leaves: &[f64]) -> Self {
        let cap = leaves.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * cap];
        nodes[cap..cap + leaves.len()].copy_from_slice(leaves);
        for i in (1..cap).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { cap, nodes }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        let mut p = self.cap + i;
        self.nodes[p] = value;
        p >>= 1;
        while p >= 1 {
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
            p >>= 1;
        }
    }

    /// Leaf index whose cumulative interval contains `u ∈ [0, total)`.
    #[inline]
    pub fn find(&self, mut u: f64) -> usize {
        let mut p = 1;
        while p < self.cap {
            let left = self.nodes[2 * p];
            if u < left {
                p *= 2;
            } else {
                u -= left;
                p = 2 * p + 1;
            }
        }
        p - self.cap
    }
}

/// Lazily extended table of `2d·m·λ(k)`.
#[derive(Clone, Debug)]
pub(crate) struct RateCache {
    rate: JumpRate,
    factor: f64,
    values: Vec<f64>,
}

impl RateCache {
    pub fn new(rate: &JumpRate, factor: f64) -> Self {
        let values = (0..64).map(|k| factor * rate.eval(k)).collect();
        RateCache { rate: rate.clone(), factor, values }
    }

    #[inline]
    pub fn get(&mut self, k: u32) -> f64 {
        let k = k as usize;
        if k >= self.values.len() {
            let to = (k + 1).next_power_of_two();
            for j in self.values.len()..to {
                self.values.push(self.factor * self.rate.eval(j));
            }
        }
        self.values[k]
    }
}

/// Occupancies on a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub lattice: Lattice,
    pub occupancies: Vec<u32>,
}

impl Configuration {
    pub fn new(lattice: Lattice, occupancies: Vec<u32>) -> Result<Self, SimError> {
        if occupancies.len() != lattice.n_sites() {
            return Err(SimError::InvalidArgument(format!(
                "{} occupancies for {} sites",
                occupancies.len(),
                lattice.n_sites()
            )));
        }
        Ok(Configuration { lattice, occupancies })
    }

    pub fn empty(lattice: Lattice) -> Self {
        Configuration { lattice, occupancies: vec![0; lattice.n_sites()] }
    }

    pub fn constant(lattice: Lattice, c: u32) -> Self {
        Configuration { lattice, occupancies: vec![c; lattice.n_sites()] }
    }

    pub fn total(&self) -> u64 {
        self.occupancies.iter().map(|&k| k as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_validation() {
        assert!(Lattice::new(1, 3).is_err());
        assert!(Lattice::new(4, 8).is_err());
        assert!(Lattice::with_budget(3, 64, 1000).is_err());
        assert_eq!(Lattice::new(2, 8).unwrap().n_sites(), 64);
    }

    #[test]
    fn sum_tree_sampling_and_updates() {
        let mut t = SumTree::new(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(3.2), 3);
        assert_eq!(t.find(6.4), 4);
        t.set(1, 4.0);
        assert_eq!(t.total(), 10.5);
        assert_eq!(t.find(1.5), 1);
        assert_eq!(t.leaf(1), 4.0);
    }

    #[test]
    fn rate_cache_extends() {
        let mut c = RateCache::new(&JumpRate::odd_bump(), 2.0);
        assert_eq!(c.get(3), 7.0);
        assert_eq!(c.get(1001), 2.0 * 1001.5);
    }
}
