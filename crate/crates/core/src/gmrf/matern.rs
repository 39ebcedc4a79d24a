//! Matérn correlation with range parametrisation `kappa = sqrt(8 nu) / phi`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::bessel::bessel_k;
use crate::error::{domain, Result};

/// Matérn correlation on a set of 2-D locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternCorr {
    pub nu: f64,
    pub phi: f64,
    pub locations: Vec<[f64; 2]>,
}

impl MaternCorr {
    pub fn new(nu: f64, phi: f64, locations: Vec<[f64; 2]>) -> Result<Self> {
        check_params(nu, phi)?;
        Ok(Self { nu, phi, locations })
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        build_matern(&self.locations, self.nu, self.phi)
    }
}

fn check_params(nu: f64, phi: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(domain(format!("Matérn smoothness must be positive, got {nu}")));
    }
    if !(phi > 0.0) {
        return Err(domain(format!("Matérn range must be positive, got {phi}")));
    }
    Ok(())
}

/// Matérn correlation at distance `h`.
///
/// Half-integer smoothness 1/2, 3/2 and 5/2 use the exponential-polynomial
/// closed forms; other orders go through `K_nu`. `C(0) = 1`.
pub fn matern_corr(h: f64, nu: f64, phi: f64) -> Result<f64> {
    check_params(nu, phi)?;
    if !(h >= 0.0) {
        return Err(domain(format!("distance must be non-negative, got {h}")));
    }
    if h == 0.0 {
        return Ok(1.0);
    }
    if phi.is_infinite() {
        return Ok(1.0);
    }
    let z = (8.0 * nu).sqrt() * h / phi;
    let c = if nu == 0.5 {
        (-z).exp()
    } else if nu == 1.5 {
        (1.0 + z) * (-z).exp()
    } else if nu == 2.5 {
        (1.0 + z + z * z / 3.0) * (-z).exp()
    } else {
        let k = bessel_k(nu, z);
        if k == 0.0 {
            0.0
        } else {
            ((1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * z.ln() + k.ln()).exp()
        }
    };
    Ok(c.min(1.0))
}

/// Dense Matérn correlation matrix over 2-D locations (Euclidean distance).
pub fn build_matern(locations: &[[f64; 2]], nu: f64, phi: f64) -> Result<DMatrix<f64>> {
    check_params(nu, phi)?;
    let n = locations.len();
    let mut r = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = locations[i][0] - locations[j][0];
            let dy = locations[i][1] - locations[j][1];
            let c = matern_corr(dx.hypot(dy), nu, phi)?;
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    Ok(r)
}
