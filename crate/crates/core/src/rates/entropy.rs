use std::collections::BTreeMap;

use super::equilibrium::{fugacity_of_density, series_tol, EquilibriumLaw};
use super::{JumpRate, RateError};
use crate::field::DensityField;

/// Relative entropy of the local-equilibrium product measure of `ρ0` with
/// respect to `ν_γ`, per unit volume:
/// `Σ vol·{ρ0 log(φ(ρ0)/φ(γ)) − log(Z(φ(ρ0))/Z(φ(γ)))}`.
///
/// Each distinct cell value is inverted exactly (no interpolation).
pub fn relative_entropy_field(
    rho0: &DensityField,
    gamma: f64,
    rate: &JumpRate,
    tol: f64,
) -> Result<f64, RateError> {
    if let Some(v) = rho0.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(RateError::Domain(format!("density field has entry {v} < 0")));
    }
    let stol = series_tol(tol);
    let at = |rho: f64| -> Result<(f64, f64), RateError> {
        let phi = fugacity_of_density(rate, rho, tol * rho.max(1.0))?;
        let law = EquilibriumLaw::at_fugacity(rate, phi, stol)?;
        Ok((phi, law.z_value.ln()))
    };
    let (phi_g, logz_g) = at(gamma)?;
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut total = 0.0;
    for &rho in &rho0.values {
        let psi = match cache.get(&rho.to_bits()) {
            Some(v) => *v,
            None => {
                let (phi, logz) = at(rho)?;
                let first = if rho > 0.0 { rho * (phi / phi_g).ln() } else { 0.0 };
                let v = first - (logz - logz_g);
                cache.insert(rho.to_bits(), v);
                v
            }
        };
        total += psi;
    }
    Ok(total * rho0.grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    #[test]
    fn equilibrium_field_has_zero_entropy() {
        let f = DensityField::constant(Grid::new(1, 16), 1.3);
        let v = relative_entropy_field(&f, 1.3, &JumpRate::odd_bump(), 1e-12).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn poisson_closed_form() {
        let f = DensityField::constant(Grid::new(2, 4), 2.0);
        let v = relative_entropy_field(&f, 1.0, &JumpRate::linear(), 1e-12).unwrap();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn negative_density_rejected() {
        let mut f = DensityField::constant(Grid::new(1, 4), 1.0);
        f.values[2] = -0.1;
        assert!(matches!(
            relative_entropy_field(&f, 1.0, &JumpRate::linear(), 1e-10),
            Err(RateError::Domain(_))
        ));
    }
}
