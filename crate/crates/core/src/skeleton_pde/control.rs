use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ops::Stencil;
use super::PdeError;
use crate::field::Grid;

/// Face control `g`, piecewise constant in time: slice `k` applies on
/// `[times[k], times[k+1])`, the last one up to `t_end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub t_end: f64,
    /// Per slice, `g` on faces indexed `cell·d + axis`.
    pub faces: Vec<Vec<f64>>,
    /// `‖g‖²_{L²_{t,x}}`, accumulated with the left-point rule.
    pub norm_sq: f64,
}

impl ControlField {
    pub fn zero(grid: Grid, t_end: f64) -> Self {
        ControlField { grid, times: vec![0.0], t_end, faces: vec![vec![0.0; grid.len() * grid.d]], norm_sq: 0.0 }
    }

    pub fn from_slices(grid: Grid, times: Vec<f64>, t_end: f64, faces: Vec<Vec<f64>>) -> Result<Self, PdeError> {
        if times.is_empty() || times.len() != faces.len() {
            return Err(PdeError::InvalidArgument("control needs one face slice per time".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) || *times.last().unwrap() >= t_end {
            return Err(PdeError::InvalidArgument("control times must start at 0, increase and stay below t_end".into()));
        }
        let n = grid.len() * grid.d;
        if faces.iter().any(|f| f.len() != n) {
            return Err(PdeError::InvalidArgument(format!("control slices must have {n} face values")));
        }
        let mut c = ControlField { grid, times, t_end, faces, norm_sq: 0.0 };
        c.norm_sq = c.quadrature_norm_sq();
        Ok(c)
    }

    /// Samples `g(t, x_face)·e_axis` at face centres on the given slice times.
    pub fn from_fn<G: Fn(f64, [f64; 3], usize) -> f64>(
        grid: Grid,
        times: Vec<f64>,
        t_end: f64,
        g: G,
    ) -> Result<Self, PdeError> {
        let h = grid.h();
        let faces = times
            .iter()
            .map(|&t| {
                let mut out = vec![0.0; grid.len() * grid.d];
                for i in 0..grid.len() {
                    let c = grid.center(i);
                    for a in 0..grid.d {
                        let mut x = c;
                        x[a] += 0.5 * h;
                        out[i * grid.d + a] = g(t, x, a);
                    }
                }
                out
            })
            .collect();
        Self::from_slices(grid, times, t_end, faces)
    }

    /// Slice active at time `t`.
    pub fn slice_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t * (1.0 + 1e-12) + 1e-15);
        &self.faces[k.saturating_sub(1)]
    }

    /// Left-point quadrature of `|g|²` over the stored slices.
    pub fn quadrature_norm_sq(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (0..self.times.len())
            .map(|k| {
                let t1 = self.times.get(k + 1).copied().unwrap_or(self.t_end);
                (t1 - self.times[k]) * self.faces[k].iter().map(|v| v * v).sum::<f64>() * vol
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.faces.iter().all(|f| f.iter().all(|&v| v == 0.0))
    }
}

/// Scalar potential `H(t, x)` on the torus.
#[derive(Clone)]
pub struct Potential {
    f: Arc<dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Potential(..)")
    }
}

impl Potential {
    pub fn new<F: Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Potential { f: Arc::new(f) }
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: [f64; 3]) -> f64 {
        (self.f)(t, x)
    }

    pub fn cell_values(&self, grid: Grid, t: f64) -> Vec<f64> {
        (0..grid.len()).map(|i| self.eval(t, grid.center(i))).collect()
    }

    /// Discrete face gradient of the cell values.
    pub fn face_gradient(&self, stencil: &Stencil, t: f64) -> Vec<f64> {
        let v = self.cell_values(stencil.grid, t);
        let mut out = vec![0.0; stencil.n_faces()];
        stencil.gradient(&v, &mut out);
        out
    }
}
