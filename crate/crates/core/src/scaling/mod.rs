//! Turning a tail statement `(U, a)` into prior rates.
//!
//! | family       | statement                  | rate                                  |
//! |--------------|----------------------------|---------------------------------------|
//! | exchangeable | `P(rho > U) = a`           | root of the truncated-tail ratio      |
//! | AR1          | `P(rho > U) = a`           | root of the truncated-tail ratio      |
//! | precision    | `P(1/sqrt(tau) > U) = a`   | `theta = -log(a) / U`                 |
//! | Matérn       | `P(phi < U_phi) = a_phi`   | `lambda_phi = -log(a_phi) U_phi`      |
//! |              | `P(1/sqrt(tau) > U_tau)`   | `lambda_tau = -log(a_tau) / U_tau`    |
//!
//! The Matérn rates come from the GRF reparametrisation `kappa = sqrt(8 nu) / phi`
//! and `psi = tau^{-1/2} phi^nu sqrt(4 pi Gamma(nu+1) / Gamma(nu))`; with an
//! exponential on `kappa` and on `psi | kappa`, the intermediate rates cancel
//! the smoothness and only the two rates above remain.

pub mod root;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Below this rate the prior is nearly flat on the distance scale.
pub const NEAR_INFEASIBLE_THETA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementDirection {
    /// `P(rho > U) = a`
    CorrelationAbove,
    /// `P(1/sqrt(tau) > U) = a`
    SdAbove,
    /// `P(phi < U) = a`
    RangeBelow,
}

/// A user statement to be solved into rate(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalingSpec {
    Exchangeable { u: f64, a: f64 },
    Ar1 { u: f64, a: f64 },
    Precision { u: f64, a: f64 },
    Matern { u_phi: f64, a_phi: f64, u_tau: f64, a_tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Rates {
    Theta { theta: f64 },
    Matern { lambda_phi: f64, lambda_tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolvedRate {
    pub rates: Rates,
    /// `|achieved probability - a|`, largest over the statements.
    pub residual: f64,
    pub iterations: usize,
    pub near_infeasible: bool,
}

impl SolvedRate {
    pub fn theta(&self) -> Option<f64> {
        match self.rates {
            Rates::Theta { theta } => Some(theta),
            Rates::Matern { .. } => None,
        }
    }

    fn closed(rates: Rates) -> Self {
        SolvedRate { rates, residual: 0.0, iterations: 0, near_infeasible: false }
    }
}

impl ScalingSpec {
    pub fn directions(&self) -> &'static [StatementDirection] {
        match self {
            ScalingSpec::Exchangeable { .. } | ScalingSpec::Ar1 { .. } => &[StatementDirection::CorrelationAbove],
            ScalingSpec::Precision { .. } => &[StatementDirection::SdAbove],
            ScalingSpec::Matern { .. } => &[StatementDirection::RangeBelow, StatementDirection::SdAbove],
        }
    }

    pub fn solve(&self) -> Result<SolvedRate> {
        match *self {
            ScalingSpec::Exchangeable { u, a } => solve_exchangeable(u, a),
            ScalingSpec::Ar1 { u, a } => solve_ar1(u, a),
            ScalingSpec::Precision { u, a } => {
                Ok(SolvedRate::closed(Rates::Theta { theta: solve_precision(u, a)? }))
            }
            ScalingSpec::Matern { u_phi, a_phi, u_tau, a_tau } => {
                let (lambda_phi, lambda_tau) = solve_matern(u_phi, a_phi, u_tau, a_tau)?;
                Ok(SolvedRate::closed(Rates::Matern { lambda_phi, lambda_tau }))
            }
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(format!("tail probability a must be in (0, 1), got {a}")));
    }
    Ok(())
}

/// `(1 - exp(-theta s)) / (1 - exp(-theta d_max))`, increasing in theta
/// from `s / d_max` towards 1.
fn truncated_tail_ratio(theta: f64, s: f64, d_max: f64) -> f64 {
    (-theta * s).exp_m1() / (-theta * d_max).exp_m1()
}

fn solve_truncated(s: f64, d_max: f64, a: f64) -> Result<SolvedRate> {
    let g = |theta: f64| truncated_tail_ratio(theta, s, d_max) - a;
    let mut lo = 1e-8;
    let mut hi = 1.0;
    while g(lo) > 0.0 {
        lo *= 1e-2;
        if lo < 1e-300 {
            return Err(Error::Solver("statement too close to the feasibility boundary".into()));
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Solver("could not bracket the rate".into()));
        }
    }
    let root = root::brent(g, lo, hi)?;
    Ok(SolvedRate {
        rates: Rates::Theta { theta: root.x },
        residual: root.fx.abs(),
        iterations: root.iterations,
        near_infeasible: root.x < NEAR_INFEASIBLE_THETA,
    })
}

/// Rate of the exchangeable PC prior with `P(rho > U) = a`. Requires `a > sqrt(1 - U)`.
pub fn solve_exchangeable(u: f64, a: f64) -> Result<SolvedRate> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("U must be in (0, 1) for the exchangeable prior, got {u}")));
    }
    check_a(a)?;
    let s = (1.0 - u).sqrt();
    if a <= s {
        return Err(Error::Infeasible("a <= sqrt(1-U)".into()));
    }
    solve_truncated(s, 1.0, a)
}

/// Rate of the AR1 PC prior with `P(rho > U) = a`. Requires `a > sqrt((1 - U)/2)`.
pub fn solve_ar1(u: f64, a: f64) -> Result<SolvedRate> {
    if !(u > -1.0 && u < 1.0) {
        return Err(domain(format!("U must be in (-1, 1) for the AR1 prior, got {u}")));
    }
    check_a(a)?;
    let s = (1.0 - u).sqrt();
    // compare squared to avoid a rounding gap at the boundary
    if 2.0 * a * a <= (1.0 - u) * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::Infeasible("a <= sqrt((1-U)/2)".into()));
    }
    solve_truncated(s, SQRT_2, a)
}

/// `theta = -log(a) / U` for `P(1/sqrt(tau) > U) = a`.
pub fn solve_precision(u: f64, a: f64) -> Result<f64> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(domain(format!("U must be positive, got {u}")));
    }
    check_a(a)?;
    Ok(-a.ln() / u)
}

/// `(lambda_phi, lambda_tau)` for `P(phi < U_phi) = a_phi` and `P(1/sqrt(tau) > U_tau) = a_tau`.
pub fn solve_matern(u_phi: f64, a_phi: f64, u_tau: f64, a_tau: f64) -> Result<(f64, f64)> {
    Ok((solve_matern_range(u_phi, a_phi)?, solve_precision(u_tau, a_tau)?))
}

/// `lambda_phi = -log(a) U` for `P(phi < U) = a`.
pub fn solve_matern_range(u_phi: f64, a_phi: f64) -> Result<f64> {
    if !(u_phi > 0.0 && u_phi.is_finite()) {
        return Err(domain(format!("U_phi must be positive, got {u_phi}")));
    }
    check_a(a_phi)?;
    Ok(-a_phi.ln() * u_phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuleOfThumb {
    pub u: f64,
    pub a: f64,
    pub theta: f64,
    pub marginal_sd: f64,
    /// `marginal_sd / U`.
    pub ratio: f64,
    pub samples: usize,
}

/// Monte Carlo marginal standard deviation of `beta ~ N(0, 1/tau)` with
/// `tau` drawn from the type-2 Gumbel prior scaled by `(U, a)`.
pub fn rule_of_thumb_check(u: f64, a: f64, samples: usize, seed: u64) -> Result<RuleOfThumb> {
    let theta = solve_precision(u, a)?;
    if samples < 2 {
        return Err(domain("need at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let v: f64 = rng.sample(Open01);
        let sd = -v.ln() / theta; // 1/sqrt(tau)
        let z: f64 = rng.sample(StandardNormal);
        let beta = sd * z;
        sum += beta;
        sum_sq += beta * beta;
    }
    let n = samples as f64;
    let mean = sum / n;
    let marginal_sd = ((sum_sq - n * mean * mean) / (n - 1.0)).sqrt();
    Ok(RuleOfThumb { u, a, theta, marginal_sd, ratio: marginal_sd / u, samples })
}
