//! Periodic finite-volume stencils. Face `i·d + a` joins cell `i` to its
//! forward neighbour along axis `a`.

use crate::field::Grid;
use crate::numerics::{conjugate_gradient, CgOutcome};

#[derive(Clone, Debug)]
pub struct Stencil {
    pub grid: Grid,
    fwd: Vec<usize>,
    back: Vec<usize>,
}

impl Stencil {
    pub fn new(grid: Grid) -> Self {
        let (n, d) = (grid.len(), grid.d);
        let mut fwd = vec![0; n * d];
        let mut back = vec![0; n * d];
        for i in 0..n {
            for a in 0..d {
                fwd[i * d + a] = grid.neighbor(i, a, true);
                back[i * d + a] = grid.neighbor(i, a, false);
            }
        }
        Stencil { grid, fwd, back }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.grid.d
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn n_faces(&self) -> usize {
        self.grid.len() * self.grid.d
    }

    #[inline]
    pub fn forward(&self, i: usize, a: usize) -> usize {
        self.fwd[i * self.grid.d + a]
    }

    #[inline]
    pub fn backward(&self, i: usize, a: usize) -> usize {
        self.back[i * self.grid.d + a]
    }

    /// `(v_j − v_i)/h` on every face.
    pub fn gradient(&self, v: &[f64], out: &mut [f64]) {
        let (d, inv_h) = (self.grid.d, 1.0 / self.grid.h());
        for i in 0..v.len() {
            for a in 0..d {
                out[i * d + a] = (v[self.fwd[i * d + a]] - v[i]) * inv_h;
            }
        }
    }

    /// Arithmetic face mean of a cell field.
    pub fn face_mean(&self, v: &[f64], out: &mut [f64]) {
        let d = self.grid.d;
        for i in 0..v.len() {
            for a in 0..d {
                out[i * d + a] = 0.5 * (v[i] + v[self.fwd[i * d + a]]);
            }
        }
    }

    /// Discrete divergence of a face flux.
    pub fn divergence(&self, f: &[f64], out: &mut [f64]) {
        let (d, inv_h) = (self.grid.d, 1.0 / self.grid.h());
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..d {
                s += f[i * d + a] - f[self.back[i * d + a] * d + a];
            }
            *o = s * inv_h;
        }
    }

    /// `Σ_faces w_f·(∇v)_f²·h^d`.
    pub fn weighted_dirichlet(&self, v: &[f64], w: Option<&[f64]>) -> f64 {
        let (d, inv_h) = (self.grid.d, 1.0 / self.grid.h());
        let mut s = 0.0;
        for i in 0..v.len() {
            for a in 0..d {
                let f = i * d + a;
                let g = (v[self.fwd[f]] - v[i]) * inv_h;
                s += w.map_or(1.0, |w| w[f]) * g * g;
            }
        }
        s * self.grid.cell_volume()
    }

    /// `out = c·u − div(w ∇u)` with nonnegative face weights `w`.
    pub fn apply_weighted(&self, c: f64, w: &[f64], u: &[f64], out: &mut [f64]) {
        let (d, inv_h2) = (self.grid.d, 1.0 / (self.grid.h() * self.grid.h()));
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = c * u[i];
            for a in 0..d {
                let (fi, fb) = (i * d + a, self.back[i * d + a]);
                s -= inv_h2 * (w[fi] * (u[self.fwd[fi]] - u[i]) - w[fb * d + a] * (u[i] - u[fb]));
            }
            *o = s;
        }
    }

    /// Solves `c·u − div(w ∇u) = b` by conjugate gradients. For `c = 0`
    /// the right-hand side must have zero mean and the returned solution is
    /// mean-free.
    pub fn solve_weighted(&self, c: f64, w: &[f64], b: &[f64], u: &mut [f64], tol: f64) -> CgOutcome {
        let out = conjugate_gradient(|x, y| self.apply_weighted(c, w, x, y), b, u, tol, 20 * b.len() + 200);
        if c == 0.0 {
            let m = u.iter().sum::<f64>() / u.len() as f64;
            u.iter_mut().for_each(|v| *v -= m);
        }
        out
    }
}

/// Periodic multilinear interpolation of a cell-centred field onto the
/// centres of a finer grid.
pub fn interpolate_cells(coarse: &[f64], from: Grid, to: Grid) -> Vec<f64> {
    assert_eq!(from.d, to.d);
    let d = from.d;
    let mc = from.m as f64;
    (0..to.len())
        .map(|j| {
            let x = to.center(j);
            let mut base = [0usize; 3];
            let mut frac = [0.0; 3];
            for a in 0..d {
                let s = x[a] * mc - 0.5;
                let f = s.floor();
                frac[a] = s - f;
                base[a] = (f as i64).rem_euclid(from.m as i64) as usize;
            }
            let mut v = 0.0;
            for corner in 0..(1usize << d) {
                let mut c = [0usize; 3];
                let mut w = 1.0;
                for a in 0..d {
                    let bit = (corner >> a) & 1;
                    c[a] = (base[a] + bit) % from.m;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                v += w * coarse[from.index(c)];
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_of_gradient_sums_to_zero() {
        let g = Grid::new(2, 8);
        let st = Stencil::new(g);
        let v: Vec<f64> = (0..64).map(|i| ((i * 13) % 7) as f64).collect();
        let mut grad = vec![0.0; 128];
        let mut lap = vec![0.0; 64];
        st.gradient(&v, &mut grad);
        st.divergence(&grad, &mut lap);
        assert!(lap.iter().sum::<f64>().abs() < 1e-10);
        // Summation by parts: −Σ v·Δv = Σ |∇v|².
        let lhs: f64 = -v.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
        assert!((lhs - st.weighted_dirichlet(&v, None)).abs() < 1e-9);
    }

    #[test]
    fn weighted_poisson_solve() {
        let g = Grid::new(1, 32);
        let st = Stencil::new(g);
        let w: Vec<f64> = (0..32).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).sin()).collect();
        let u_true: Vec<f64> = (0..32).map(|i| (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / 32.0).cos()).collect();
        let mut b = vec![0.0; 32];
        st.apply_weighted(0.0, &w, &u_true, &mut b);
        let mut u = vec![0.0; 32];
        assert!(st.solve_weighted(0.0, &w, &b, &mut u, 1e-13).converged);
        let m = u_true.iter().sum::<f64>() / 32.0;
        for i in 0..32 {
            assert!((u[i] - (u_true[i] - m)).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_in_interior() {
        let (c, f) = (Grid::new(1, 8), Grid::new(1, 32));
        let coarse: Vec<f64> = (0..8).map(|i| c.center(i)[0]).collect();
        let fine = interpolate_cells(&coarse, c, f);
        for j in 0..32 {
            let x = f.center(j)[0];
            if x > 1.0 / 16.0 && x < 1.0 - 1.0 / 16.0 {
                assert!((fine[j] - x).abs() < 1e-14);
            }
        }
    }
}
