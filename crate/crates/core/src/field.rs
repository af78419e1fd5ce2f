//! Periodic cell grids on the unit torus and scalar fields living on them.

use serde::{Deserialize, Serialize};

/// Uniform periodic grid of `m^d` cells with spacing `h = 1/m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub m: usize,
}

impl Grid {
    pub fn new(d: usize, m: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        assert!(m >= 2, "need at least two cells per side");
        Grid { d, m }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Integer coordinates of a flat index (axis 0 varies fastest).
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut r = idx;
        for slot in c.iter_mut().take(self.d) {
            *slot = r % self.m;
            r /= self.m;
        }
        c
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        let mut idx = 0;
        for a in (0..self.d).rev() {
            idx = idx * self.m + c[a];
        }
        idx
    }

    /// Neighbour of `idx` one step forward (`+1`) or back (`-1`) along `axis`.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let stride = self.m.pow(axis as u32);
        let c = (idx / stride) % self.m;
        if forward {
            if c + 1 == self.m {
                idx + stride - self.m * stride
            } else {
                idx + stride
            }
        } else if c == 0 {
            idx + (self.m - 1) * stride
        } else {
            idx - stride
        }
    }

    /// Cell-centre position in `[0,1)^d`.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = self.h();
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = (c[a] as f64 + 0.5) * h;
        }
        x
    }
}

/// Real-valued cell field with a time stamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Self {
        assert_eq!(values.len(), grid.len(), "field size does not match grid");
        DensityField { grid, values, time }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::new(grid, vec![c; grid.len()], 0.0)
    }

    /// Samples `f` at cell centres.
    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: Grid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values, 0.0)
    }

    /// `∫ρ` over the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    /// CSV with one `index,value` row per cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i},{v:.17e}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_wrap() {
        let g = Grid::new(2, 4);
        let idx = g.index([3, 0, 0]);
        assert_eq!(g.neighbor(idx, 0, true), g.index([0, 0, 0]));
        assert_eq!(g.neighbor(idx, 1, false), g.index([3, 3, 0]));
        for i in 0..g.len() {
            for a in 0..2 {
                assert_eq!(g.neighbor(g.neighbor(i, a, true), a, false), i);
            }
            assert_eq!(g.index(g.coords(i)), i);
        }
    }

    #[test]
    fn integral_of_constant() {
        let f = DensityField::constant(Grid::new(3, 5), 2.5);
        assert!((f.integral() - 2.5).abs() < 1e-14);
    }
}
