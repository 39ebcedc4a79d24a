use rand::{Rng, RngCore};
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use super::{DistanceDensity, ScalarPrior};
use crate::error::{domain, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn check_rate(name: &str, rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(domain(format!("{name} must be positive and finite, got {rate}")));
    }
    Ok(())
}

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("probability must be in (0, 1), got {p}")));
    }
    Ok(())
}

/// `1 - exp(-x)` without cancellation.
fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// PC prior on a correlation whose distance is `sqrt(1 - rho)` truncated
/// to `[0, d_max]`: an exponential with rate `theta` on that interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TruncatedCorr {
    theta: f64,
    d_max: f64,
}

impl TruncatedCorr {
    fn log_norm(&self) -> f64 {
        one_minus_exp(self.theta * self.d_max).ln()
    }

    fn log_density(&self, rho: f64) -> f64 {
        let lower = 1.0 - self.d_max * self.d_max;
        if !(rho >= lower && rho <= 1.0) {
            return f64::NEG_INFINITY;
        }
        let s = (1.0 - rho).sqrt();
        if s == 0.0 {
            return f64::INFINITY;
        }
        self.theta.ln() - self.theta * s - std::f64::consts::LN_2 - s.ln() - self.log_norm()
    }

    /// `P(rho > r)`, the tail used by the (U, a) statement.
    fn upper_tail(&self, r: f64) -> f64 {
        let lower = 1.0 - self.d_max * self.d_max;
        if r <= lower {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let s = (1.0 - r).sqrt();
        one_minus_exp(self.theta * s) / one_minus_exp(self.theta * self.d_max)
    }

    fn cdf(&self, r: f64) -> f64 {
        let lower = 1.0 - self.d_max * self.d_max;
        if r <= lower {
            return 0.0;
        }
        if r >= 1.0 {
            return 1.0;
        }
        let s = (1.0 - r).sqrt();
        ((-self.theta * s).exp_m1() - (-self.theta * self.d_max).exp_m1()) / one_minus_exp(self.theta * self.d_max)
    }

    fn distance_from_tail(&self, tail: f64) -> f64 {
        // tail = P(d <= s) = (1 - e^{-theta s}) / (1 - e^{-theta d_max})
        -(-tail * one_minus_exp(self.theta * self.d_max)).ln_1p() / self.theta
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        let s = self.distance_from_tail(1.0 - p).min(self.d_max);
        Ok(1.0 - s * s)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.sample(Open01);
        let s = self.distance_from_tail(u).min(self.d_max);
        1.0 - s * s
    }
}

/// PC prior for the exchangeable correlation, base model `rho = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchCorrPrior {
    pub theta: f64,
}

impl ExchCorrPrior {
    pub fn new(theta: f64) -> Result<Self> {
        check_rate("theta", theta)?;
        Ok(Self { theta })
    }

    fn inner(&self) -> TruncatedCorr {
        TruncatedCorr { theta: self.theta, d_max: 1.0 }
    }

    /// `P(rho > u)`.
    pub fn upper_tail(&self, u: f64) -> f64 {
        self.inner().upper_tail(u)
    }
}

impl ScalarPrior for ExchCorrPrior {
    fn log_density(&self, rho: f64) -> f64 {
        self.inner().log_density(rho)
    }
    fn cdf(&self, rho: f64) -> f64 {
        self.inner().cdf(rho)
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        self.inner().quantile(p)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn to_distance(&self, rho: f64) -> f64 {
        (1.0 - rho).max(0.0).sqrt()
    }
    fn from_distance(&self, d: f64) -> f64 {
        1.0 - d * d
    }
    fn distance_density(&self) -> DistanceDensity {
        DistanceDensity::TruncatedExponential { rate: self.theta, upper: 1.0 }
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().sample(rng)
    }
}

/// PC prior for the AR1 lag-one correlation, base model `rho = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1CorrPrior {
    pub theta: f64,
}

impl Ar1CorrPrior {
    pub fn new(theta: f64) -> Result<Self> {
        check_rate("theta", theta)?;
        Ok(Self { theta })
    }

    fn inner(&self) -> TruncatedCorr {
        TruncatedCorr { theta: self.theta, d_max: SQRT_2 }
    }

    /// `P(rho > u)`.
    pub fn upper_tail(&self, u: f64) -> f64 {
        self.inner().upper_tail(u)
    }
}

impl ScalarPrior for Ar1CorrPrior {
    fn log_density(&self, rho: f64) -> f64 {
        self.inner().log_density(rho)
    }
    fn cdf(&self, rho: f64) -> f64 {
        self.inner().cdf(rho)
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        self.inner().quantile(p)
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
        DistanceDensity::TruncatedExponential { rate: self.theta, upper: SQRT_2 }
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().sample(rng)
    }
}

/// Type-2 Gumbel PC prior on a precision: `1/sqrt(tau)` is exponential(theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gumbel2PrecisionPrior {
    pub theta: f64,
}

impl Gumbel2PrecisionPrior {
    pub fn new(theta: f64) -> Result<Self> {
        check_rate("theta", theta)?;
        Ok(Self { theta })
    }

    /// `P(1/sqrt(tau) > u)`.
    pub fn sd_upper_tail(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        (-self.theta * u).exp()
    }
}

impl ScalarPrior for Gumbel2PrecisionPrior {
    fn log_density(&self, tau: f64) -> f64 {
        if !(tau > 0.0) {
            return f64::NEG_INFINITY;
        }
        if tau.is_infinite() {
            return f64::NEG_INFINITY;
        }
        (0.5 * self.theta).ln() - 1.5 * tau.ln() - self.theta / tau.sqrt()
    }
    fn cdf(&self, tau: f64) -> f64 {
        if !(tau > 0.0) {
            return 0.0;
        }
        (-self.theta / tau.sqrt()).exp()
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        let d = -p.ln() / self.theta;
        Ok(1.0 / (d * d))
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn to_distance(&self, tau: f64) -> f64 {
        1.0 / tau.sqrt()
    }
    fn from_distance(&self, d: f64) -> f64 {
        1.0 / (d * d)
    }
    fn distance_density(&self) -> DistanceDensity {
        DistanceDensity::TruncatedExponential { rate: self.theta, upper: f64::INFINITY }
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.sample(Open01);
        let d = -u.ln() / self.theta;
        1.0 / (d * d)
    }
}

/// Marginal PC prior on the Matérn range: `1/phi` is exponential(lambda_phi).
///
/// `kappa = sqrt(8 nu) / phi` is exponential in the GRF derivation, so the
/// distance is proportional to `1/phi` whatever the smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternRangePrior {
    pub lambda: f64,
}

impl MaternRangePrior {
    pub fn new(lambda: f64) -> Result<Self> {
        check_rate("lambda_phi", lambda)?;
        Ok(Self { lambda })
    }

    /// Mode of the density in `phi`.
    pub fn mode(&self) -> f64 {
        self.lambda / 2.0
    }
}

impl ScalarPrior for MaternRangePrior {
    fn log_density(&self, phi: f64) -> f64 {
        if !(phi > 0.0) || phi.is_infinite() {
            return f64::NEG_INFINITY;
        }
        self.lambda.ln() - 2.0 * phi.ln() - self.lambda / phi
    }
    fn cdf(&self, phi: f64) -> f64 {
        if !(phi > 0.0) {
            return 0.0;
        }
        (-self.lambda / phi).exp()
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(self.lambda / -p.ln())
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn to_distance(&self, phi: f64) -> f64 {
        1.0 / phi
    }
    fn from_distance(&self, d: f64) -> f64 {
        1.0 / d
    }
    fn distance_density(&self) -> DistanceDensity {
        DistanceDensity::TruncatedExponential { rate: self.lambda, upper: f64::INFINITY }
    }
    fn sample_one(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.lambda / -u.ln()
    }
}

/// Joint PC prior for the Matérn `(tau, phi)` pair. It factorises into the
/// range marginal and a type-2 Gumbel on the precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternJointPrior {
    pub range: MaternRangePrior,
    pub precision: Gumbel2PrecisionPrior,
}

impl MaternJointPrior {
    pub fn new(lambda_phi: f64, lambda_tau: f64) -> Result<Self> {
        Ok(Self {
            range: MaternRangePrior::new(lambda_phi)?,
            precision: Gumbel2PrecisionPrior::new(lambda_tau)?,
        })
    }

    pub fn lambda_phi(&self) -> f64 {
        self.range.lambda
    }

    pub fn lambda_tau(&self) -> f64 {
        self.precision.theta
    }

    pub fn log_density(&self, tau: f64, phi: f64) -> f64 {
        self.range.log_density(phi) + self.precision.log_density(tau)
    }

    pub fn density(&self, tau: f64, phi: f64) -> f64 {
        self.log_density(tau, phi).exp()
    }

    /// Independent `(tau, phi)` draws.
    pub fn sample_pair(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let phi = self.range.sample_one(rng);
        let tau = self.precision.sample_one(rng);
        (tau, phi)
    }
}
