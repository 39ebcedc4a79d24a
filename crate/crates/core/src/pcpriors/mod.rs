//! PC-prior families, comparison priors and their distance-scale view.
//!
//! Every PC prior here is an exponential on a distance `d` to the base model,
//! pushed through `d -> parameter`. The correlation priors have bounded
//! distance and are truncated exponentials; the precision and range priors
//! have unbounded distance.
//!
//! Densities are evaluated in log space. At a singular endpoint (`rho = 1`
//! for the correlation priors) the density is `+inf`; the singularity is
//! integrable and disappears under `s = sqrt(1 - rho)`.

mod comparison;
mod families;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use comparison::{ar1_reference_density, uniform_density, Ar1ReferencePrior, UniformCorrPrior};
pub use families::{Ar1CorrPrior, ExchCorrPrior, Gumbel2PrecisionPrior, MaternJointPrior, MaternRangePrior};

use crate::error::{domain, Result};

/// A univariate prior with analytic CDF and a map to the distance scale.
pub trait ScalarPrior {
    /// `-inf` outside the support, `+inf` at a singular endpoint.
    fn log_density(&self, x: f64) -> f64;

    fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    fn cdf(&self, x: f64) -> f64;

    fn quantile(&self, p: f64) -> Result<f64>;

    fn support(&self) -> (f64, f64);

    /// Distance to the base model in c-units.
    fn to_distance(&self, x: f64) -> f64;

    fn from_distance(&self, d: f64) -> f64;

    /// The prior expressed as a density over `d`.
    fn distance_density(&self) -> DistanceDensity;

    fn sample_one(&self, rng: &mut dyn RngCore) -> f64;

    fn sample(&self, rng: &mut dyn RngCore, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }
}

/// Density over the distance scale `d >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceDensity {
    /// `rate exp(-rate d) / (1 - exp(-rate upper))` on `[0, upper]`.
    TruncatedExponential { rate: f64, upper: f64 },
    /// Uniform on `rho in (-1, 1)` seen through `d = sqrt(1 - rho)`: `pi(d) = d`.
    UniformCorr,
    /// Arcsine on `rho` seen through `d = sqrt(1 - rho)`: `2 / (pi sqrt(2 - d^2))`.
    ReferenceCorr,
}

impl DistanceDensity {
    pub fn upper(&self) -> f64 {
        match *self {
            DistanceDensity::TruncatedExponential { upper, .. } => upper,
            DistanceDensity::UniformCorr | DistanceDensity::ReferenceCorr => std::f64::consts::SQRT_2,
        }
    }

    pub fn log_density(&self, d: f64) -> f64 {
        if !(d >= 0.0 && d <= self.upper()) {
            return f64::NEG_INFINITY;
        }
        match *self {
            DistanceDensity::TruncatedExponential { rate, upper } => {
                let log_norm = if upper.is_infinite() { 0.0 } else { (-(-rate * upper).exp_m1()).ln() };
                rate.ln() - rate * d - log_norm
            }
            DistanceDensity::UniformCorr => d.ln(),
            DistanceDensity::ReferenceCorr => {
                std::f64::consts::LN_2 - std::f64::consts::PI.ln() - 0.5 * (2.0 - d * d).ln()
            }
        }
    }

    pub fn density(&self, d: f64) -> f64 {
        self.log_density(d).exp()
    }

    /// `P(D <= d)`.
    pub fn cdf(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        if d >= self.upper() {
            return 1.0;
        }
        match *self {
            DistanceDensity::TruncatedExponential { rate, upper } => {
                let z = if upper.is_infinite() { 1.0 } else { -(-rate * upper).exp_m1() };
                -(-rate * d).exp_m1() / z
            }
            DistanceDensity::UniformCorr => 0.5 * d * d,
            // P(rho >= 1 - d^2) under the arcsine law
            DistanceDensity::ReferenceCorr => 0.5 - (1.0 - d * d).asin() / std::f64::consts::PI,
        }
    }
}

/// One of the four PC-prior families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PcPrior {
    ExchCorr(ExchCorrPrior),
    Ar1Corr(Ar1CorrPrior),
    Gumbel2Precision(Gumbel2PrecisionPrior),
    MaternJoint(MaternJointPrior),
}

/// Output of [`sample`]: scalars, or `(tau, phi)` pairs for the Matérn prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Draws {
    Scalar(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
}

impl PcPrior {
    pub fn as_scalar(&self) -> Option<&dyn ScalarPrior> {
        match self {
            PcPrior::ExchCorr(p) => Some(p),
            PcPrior::Ar1Corr(p) => Some(p),
            PcPrior::Gumbel2Precision(p) => Some(p),
            PcPrior::MaternJoint(_) => None,
        }
    }

    pub fn sample_with(&self, rng: &mut dyn RngCore, count: usize) -> Draws {
        match self {
            PcPrior::MaternJoint(p) => Draws::Pairs((0..count).map(|_| p.sample_pair(rng)).collect()),
            other => Draws::Scalar(other.as_scalar().expect("scalar family").sample(rng, count)),
        }
    }
}

/// Seeded inverse-CDF sampler. Identical seeds give identical draws.
pub fn sample(prior: &PcPrior, count: usize, seed: u64) -> Result<Draws> {
    if count == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(prior.sample_with(&mut rng, count))
}

/// Quantile of a scalar prior; fails for `p` outside `(0, 1)`.
pub fn quantile(prior: &dyn ScalarPrior, p: f64) -> Result<f64> {
    prior.quantile(p)
}

pub fn to_distance_scale(prior: &dyn ScalarPrior) -> DistanceDensity {
    prior.distance_density()
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(domain(format!("rate must be positive, got {theta}")));
    }
    Ok(())
}

/// Exchangeable PC density at `rho in [0, 1)`.
pub fn exch_density(rho: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(domain(format!("exchangeable correlation must be in [0, 1), got {rho}")));
    }
    Ok(ExchCorrPrior { theta }.density(rho))
}

/// AR1 PC density at `|rho| < 1`. `rho = -1` is accepted as the finite endpoint.
pub fn ar1_density(rho: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(-1.0..1.0).contains(&rho) {
        return Err(domain(format!("AR1 correlation must satisfy |rho| < 1, got {rho}")));
    }
    Ok(Ar1CorrPrior { theta }.density(rho))
}

pub fn gumbel2_density(tau: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!("precision must be positive, got {tau}")));
    }
    Ok(Gumbel2PrecisionPrior { theta }.density(tau))
}

/// `P(tau <= t) = exp(-theta / sqrt(t))`.
pub fn gumbel2_cdf(tau: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(tau > 0.0) {
        return Err(domain(format!("precision must be positive, got {tau}")));
    }
    Ok(Gumbel2PrecisionPrior { theta }.cdf(tau))
}

pub fn matern_joint_density(tau: f64, phi: f64, lambda_tau: f64, lambda_phi: f64) -> Result<f64> {
    let prior = MaternJointPrior::new(lambda_phi, lambda_tau)?;
    if !(tau > 0.0 && phi > 0.0) {
        return Err(domain("precision and range must be positive"));
    }
    Ok(prior.density(tau, phi))
}
