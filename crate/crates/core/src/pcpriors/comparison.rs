//! Non-PC priors on the AR1 correlation, used to compare behaviour near the
//! base model.

use rand::{Rng, RngCore};
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use super::{DistanceDensity, ScalarPrior};
use crate::error::{domain, Result};

/// Uniform on `(-1, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformCorrPrior;

/// Arcsine density `1 / (pi sqrt(1 - rho^2))`, the stationary-AR1 reference prior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ar1ReferencePrior;

fn check_open(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("probability must be in (0, 1), got {p}")));
    }
    Ok(())
}

impl ScalarPrior for UniformCorrPrior {
    fn log_density(&self, rho: f64) -> f64 {
        if rho > -1.0 && rho < 1.0 {
            -std::f64::consts::LN_2
        } else {
            f64::NEG_INFINITY
        }
    }
    fn cdf(&self, rho: f64) -> f64 {
        (0.5 * (rho + 1.0)).clamp(0.0, 1.0)
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok(2.0 * p - 1.0)
    }
    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn to_distance(&self, rho: f64) -> f64 {
        (1.0 - rho).max(0.0).sqrt()
    }
    fn from_distance(&self, d: f64) -> f64 {
        1.0 - d * d
    }
    fn distance_density(&self) -> DistanceDensity {
        DistanceDensity::UniformCorr
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.sample(Open01);
        2.0 * u - 1.0
    }
}

impl ScalarPrior for Ar1ReferencePrior {
    fn log_density(&self, rho: f64) -> f64 {
        if rho > -1.0 && rho < 1.0 {
            -std::f64::consts::PI.ln() - 0.5 * ((1.0 - rho) * (1.0 + rho)).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
    fn cdf(&self, rho: f64) -> f64 {
        (0.5 + rho.clamp(-1.0, 1.0).asin() / std::f64::consts::PI).clamp(0.0, 1.0)
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        check_open(p)?;
        Ok((std::f64::consts::PI * (p - 0.5)).sin())
    }
    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn to_distance(&self, rho: f64) -> f64 {
        (1.0 - rho).max(0.0).sqrt()
    }
    fn from_distance(&self, d: f64) -> f64 {
        1.0 - d * d
    }
    fn distance_density(&self) -> DistanceDensity {
        DistanceDensity::ReferenceCorr
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.sample(Open01);
        (std::f64::consts::PI * (u - 0.5)).sin()
    }
}

pub fn uniform_density(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(domain(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    Ok(0.5)
}

pub fn ar1_reference_density(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(domain(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    Ok(Ar1ReferencePrior.density(rho))
}
