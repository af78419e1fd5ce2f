use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NonlinearityModel;

/// Result of sampling `(Φ^½(u))^ε / Φ^½(u^ε)` over random profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub max_ratio: f64,
    pub vartheta: f64,
    pub samples: usize,
    /// Samples where some point exceeded `ϑ` (relative slack 1e-12).
    pub violations: usize,
}

const CELLS: usize = 256;

/// Draws `samples` random piecewise-constant periodic profiles on 256
/// cells, mollifies them at a scale picked from `scales` with a smooth
/// bump kernel, and records the worst ratio against `ϑ = √(A/a)`.
pub fn defective_concavity_check(
    model: &NonlinearityModel,
    samples: usize,
    scales: &[f64],
    seed: u64,
) -> ConcavityReport {
    assert!(!scales.is_empty(), "need at least one kernel scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = model.rho_max();
    let bound = model.vartheta * (1.0 + 1e-12);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut u = vec![0.0; CELLS];
    let mut root = vec![0.0; CELLS];
    for _ in 0..samples {
        let pieces = rng.random_range(1..=8usize);
        let mut cuts: Vec<usize> = (0..pieces).map(|_| rng.random_range(0..CELLS)).collect();
        cuts.sort_unstable();
        let values: Vec<f64> = (0..pieces)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..top) })
            .collect();
        for (i, slot) in u.iter_mut().enumerate() {
            // Periodic piecewise constant: value of the last cut at or before i.
            let j = cuts.partition_point(|&c| c <= i);
            *slot = values[if j == 0 { pieces - 1 } else { j - 1 }];
        }
        for (r, &v) in root.iter_mut().zip(&u) {
            *r = model.sqrt_phi(v);
        }
        let eps = scales[rng.random_range(0..scales.len())];
        let kernel = bump_kernel(((eps * CELLS as f64).round() as usize).max(1));
        let half = kernel.len() / 2;

        let mut worst: f64 = 0.0;
        for i in 0..CELLS {
            let (mut lhs, mut avg) = (0.0, 0.0);
            for (j, k) in kernel.iter().enumerate() {
                let idx = (i + CELLS + j - half) % CELLS;
                lhs += k * root[idx];
                avg += k * u[idx];
            }
            let rhs = model.sqrt_phi(avg);
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs);
            }
        }
        if worst > bound {
            violations += 1;
        }
        max_ratio = max_ratio.max(worst);
    }
    ConcavityReport { max_ratio, vartheta: model.vartheta, samples, violations }
}

/// Normalised `exp(−1/(1−s²))` weights on `2r+1` points.
fn bump_kernel(r: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..=2 * r)
        .map(|j| {
            let s = (j as f64 - r as f64) / (r as f64 + 1.0);
            (-1.0 / (1.0 - s * s)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}
