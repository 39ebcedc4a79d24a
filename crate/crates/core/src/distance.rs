//! Kullback-Leibler divergences and distances to the base model.
//!
//! Distances are `d = sqrt(2 KLD(flexible || base))`. For the correlation
//! families and the precision family the base model is only reached in a
//! limit and `d` carries a model-dependent constant `c`. Every downstream
//! use absorbs `c` into the prior rate, so distances are reported in
//! c-units and flagged with `constant_factored`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::gmrf::{Ar1Corr, ExchangeableCorr, IgmrfStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceFamily {
    Exchangeable,
    Ar1,
    Precision,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    /// Whether the limiting constant `c` has been divided out of `value`.
    pub constant_factored: bool,
    pub family: DistanceFamily,
}

/// A base/flexible pair of zero-mean Gaussian covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnPair {
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
}

impl MvnPair {
    pub fn new(sigma0: DMatrix<f64>, sigma1: DMatrix<f64>) -> Result<Self> {
        check_square(&sigma0)?;
        check_square(&sigma1)?;
        if sigma0.nrows() != sigma1.nrows() {
            return Err(Error::Dimension { expected: sigma0.nrows(), got: sigma1.nrows() });
        }
        Ok(Self { sigma0, sigma1 })
    }

    pub fn n(&self) -> usize {
        self.sigma0.nrows()
    }

    pub fn kld(&self) -> Result<f64> {
        kld_mvn(&self.sigma0, &self.sigma1)
    }

    pub fn distance(&self) -> Result<DistanceResult> {
        Ok(DistanceResult {
            value: (2.0 * self.kld()?).sqrt(),
            constant_factored: false,
            family: DistanceFamily::Numeric,
        })
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
    }
    Ok(())
}

/// `KLD(N(0, sigma1) || N(0, sigma0))`, where `sigma0` is the base model.
pub fn kld_mvn(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<f64> {
    check_square(sigma0)?;
    check_square(sigma1)?;
    let n = sigma0.nrows();
    if sigma1.nrows() != n {
        return Err(Error::Dimension { expected: n, got: sigma1.nrows() });
    }
    let c0 = sigma0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("base covariance".into()))?;
    let c1 = sigma1
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("flexible covariance".into()))?;
    let trace = c0.solve(sigma1).trace();
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| -> f64 {
        2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    };
    let kld = 0.5 * (trace - n as f64 - (logdet(&c1) - logdet(&c0)));
    Ok(kld.max(0.0))
}

/// Closed-form KLD between exchangeable models with correlations `rho`
/// (flexible) and `rho0` (base), `0 <= rho <= rho0 < 1`.
pub fn kld_exchangeable_closed(n: usize, rho0: f64, rho: f64) -> Result<f64> {
    ExchangeableCorr::new(n, rho0)?;
    ExchangeableCorr::new(n, rho)?;
    if rho > rho0 {
        return Err(domain(format!("flexible correlation {rho} must not exceed base correlation {rho0}")));
    }
    // Both matrices share eigenvectors: eigenvalue 1 + (n-1) rho once and
    // 1 - rho with multiplicity n - 1. Summing x - 1 - ln x over eigenvalue
    // ratios, written through e = x - 1, avoids cancellation when rho ~ rho0.
    let m = n as f64 - 1.0;
    let f = |e: f64| e - e.ln_1p();
    let e_lead = m * (rho - rho0) / (1.0 + m * rho0);
    let e_rest = (rho0 - rho) / (1.0 - rho0);
    Ok((0.5 * (f(e_lead) + m * f(e_rest))).max(0.0))
}

/// Generic-formula KLD for the exchangeable pair, through dense matrices.
pub fn kld_exchangeable_numeric(n: usize, rho0: f64, rho: f64) -> Result<f64> {
    kld_mvn(&ExchangeableCorr::new(n, rho0)?.matrix(), &ExchangeableCorr::new(n, rho)?.matrix())
}

pub fn kld_ar1_numeric(n: usize, rho0: f64, rho: f64) -> Result<f64> {
    kld_mvn(&Ar1Corr::new(n, rho0)?.matrix(), &Ar1Corr::new(n, rho)?.matrix())
}

/// KLD between intrinsic Gaussians `pi(beta | tau)` and `pi(beta | tau0)`
/// sharing the structure `K`, evaluated on the range space of `K`.
pub fn kld_intrinsic(structure: &IgmrfStructure, tau0: f64, tau: f64) -> Result<f64> {
    if !(tau0 > 0.0 && tau > 0.0) {
        return Err(domain("precisions must be positive"));
    }
    let ginv = structure.generalized_inverse()?;
    let (_, basis) = structure.range_space()?;
    let reduced = basis.transpose() * ginv * &basis;
    kld_mvn(&(&reduced / tau0), &(&reduced / tau))
}

/// Exchangeable distance in c-units: `sqrt(1 - rho)`, in `[0, 1]`.
pub fn distance_exchangeable(rho: f64) -> Result<DistanceResult> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(domain(format!("exchangeable correlation must be in [0, 1), got {rho}")));
    }
    Ok(DistanceResult {
        value: (1.0 - rho).sqrt(),
        constant_factored: true,
        family: DistanceFamily::Exchangeable,
    })
}

/// AR1 distance in c-units: `sqrt(1 - rho)`, in `[0, sqrt 2]`.
pub fn distance_ar1(rho: f64) -> Result<DistanceResult> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(domain(format!("AR1 correlation must satisfy |rho| < 1, got {rho}")));
    }
    Ok(DistanceResult {
        value: (1.0 - rho).sqrt(),
        constant_factored: true,
        family: DistanceFamily::Ar1,
    })
}

/// Precision distance with the constant `sqrt(n_eff tau0)` divided out: `1/sqrt(tau)`.
pub fn distance_precision(tau: f64, n_eff: usize) -> Result<DistanceResult> {
    if !(tau > 0.0) {
        return Err(domain(format!("precision must be positive, got {tau}")));
    }
    if n_eff == 0 {
        return Err(domain("effective dimension must be positive"));
    }
    Ok(DistanceResult {
        value: 1.0 / tau.sqrt(),
        constant_factored: true,
        family: DistanceFamily::Precision,
    })
}

/// Limiting precision distance `sqrt(n_eff tau0 / tau)` for a finite base precision.
pub fn distance_precision_limit(tau: f64, n_eff: usize, tau0: f64) -> Result<DistanceResult> {
    let base = distance_precision(tau, n_eff)?;
    if !(tau0 > 0.0) {
        return Err(domain("base precision must be positive"));
    }
    Ok(DistanceResult {
        value: base.value * (n_eff as f64 * tau0).sqrt(),
        constant_factored: false,
        family: DistanceFamily::Precision,
    })
}
