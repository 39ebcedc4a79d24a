//! Synthetic scenarios and the prior-comparison study on the AR1 model.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evidence::{EvidenceMethod, Evaluator};
use super::grid::{normalize_log_weights, Grid, GridSpec};
use super::{Hyper, ModelPrior, VcmDataset, VcmFamily, VcmModelSpec, DEFAULT_ALPHA_VAR, DEFAULT_BETA0_VAR};
use crate::error::{domain, Result};
use crate::pcpriors::{Ar1CorrPrior, PcPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Constant true coefficient, noisy data.
    Sc1,
    /// AR1 coefficient with moderate correlation, informative data.
    Sc2,
}

/// Data-generating settings. `rho_true = 1` means `beta_t = 0` for all `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub rho_true: f64,
    pub noise_sd: f64,
    pub alpha: f64,
    pub beta0: f64,
    /// Marginal sd of `beta_t` when `rho_true < 1`.
    pub beta_sd: f64,
}

impl Scenario {
    pub fn sc1() -> Self {
        Self { kind: ScenarioKind::Sc1, n: 50, rho_true: 1.0, noise_sd: 1.0, alpha: 0.5, beta0: 1.0, beta_sd: 1.0 }
    }

    pub fn sc2() -> Self {
        Self { kind: ScenarioKind::Sc2, n: 500, rho_true: 0.5, noise_sd: 0.1, alpha: 0.5, beta0: 1.0, beta_sd: 1.0 }
    }

    pub fn defaults(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Sc1 => Self::sc1(),
            ScenarioKind::Sc2 => Self::sc2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(domain(format!("scenario needs n >= 3, got {}", self.n)));
        }
        if !(self.rho_true > -1.0 && self.rho_true <= 1.0) {
            return Err(domain(format!("rho_true must be in (-1, 1], got {}", self.rho_true)));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(domain(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        if !(self.beta_sd >= 0.0 && self.beta_sd.is_finite()) {
            return Err(domain(format!("beta sd must be non-negative, got {}", self.beta_sd)));
        }
        if !(self.alpha.is_finite() && self.beta0.is_finite()) {
            return Err(domain("alpha and beta0 must be finite"));
        }
        Ok(())
    }

    /// The true `beta_t` and `x_t` drawn from `rng`, in that order: all of `x`,
    /// then `beta`, then the noise.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut beta = vec![0.0; n];
        if self.rho_true < 1.0 {
            let r = self.rho_true;
            let innov = self.beta_sd * (1.0 - r * r).sqrt();
            beta[0] = self.beta_sd * rng.sample::<f64, _>(StandardNormal);
            for t in 1..n {
                beta[t] = r * beta[t - 1] + innov * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = (0..n)
            .map(|t| self.alpha + (self.beta0 + beta[t]) * x[t] + self.noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, beta, y)
    }
}

/// One synthetic dataset; the same seed gives the same data bit for bit.
pub fn simulate_scenario(scenario: &Scenario, seed: u64) -> Result<VcmDataset> {
    Ok(simulate_with_truth(scenario, seed)?.0)
}

/// Dataset together with the true `beta`.
pub fn simulate_with_truth(scenario: &Scenario, seed: u64) -> Result<(VcmDataset, Vec<f64>)> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, beta, y) = scenario.draw(&mut rng);
    let t = (1..=scenario.n).map(|i| i as f64).collect();
    Ok((VcmDataset::new(t, x, y, scenario.noise_sd)?, beta))
}

/// Priors on the AR1 correlation taking part in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ComparisonPrior {
    Pc { theta: f64 },
    Uniform,
    Reference,
}

impl ComparisonPrior {
    pub fn name(&self) -> &'static str {
        match self {
            ComparisonPrior::Pc { .. } => "pc",
            ComparisonPrior::Uniform => "uniform",
            ComparisonPrior::Reference => "reference",
        }
    }

    pub fn model_prior(&self) -> Result<ModelPrior> {
        Ok(match *self {
            ComparisonPrior::Pc { theta } => ModelPrior::Pc(PcPrior::Ar1Corr(Ar1CorrPrior::new(theta)?)),
            ComparisonPrior::Uniform => ModelPrior::Uniform,
            ComparisonPrior::Reference => ModelPrior::Reference,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareOptions {
    pub grid_points: usize,
    /// Fixed precision of `beta` in the fitted AR1 model.
    pub tau: f64,
    pub alpha_var: f64,
    pub beta0_var: f64,
    /// Threshold on `d = sqrt(1 - rho)` for "near the base model".
    pub near_base: f64,
    /// Threshold for the reported `P(rho > .)`.
    pub high_rho: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            grid_points: GridSpec::default().points,
            tau: 1.0,
            alpha_var: DEFAULT_ALPHA_VAR,
            beta0_var: DEFAULT_BETA0_VAR,
            near_base: 0.1,
            high_rho: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub replication: usize,
    pub seed: u64,
    pub posterior_mean_rho: f64,
    pub posterior_sd_rho: f64,
    /// `P(rho > high_rho | y)`.
    pub prob_rho_above: f64,
    /// `P(d < near_base | y)`.
    pub prob_near_base: f64,
    pub posterior_mean_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    /// Mean over replications of `|E[rho | y] - rho_true|`.
    pub mean_abs_error: f64,
    pub mean_posterior_mean_rho: f64,
    pub mean_prob_rho_above: f64,
    pub mean_prob_near_base: f64,
    pub mean_posterior_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorReport {
    pub prior: ComparisonPrior,
    pub aggregate: Aggregate,
    pub replications: Vec<ReplicationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub scenario: Scenario,
    pub family: String,
    pub seed: u64,
    pub replications: usize,
    pub options: CompareOptions,
    pub priors: Vec<PriorReport>,
}

/// Fits every prior to the same simulated datasets with default options.
pub fn compare_priors(
    scenario: &Scenario,
    priors: &[ComparisonPrior],
    replications: usize,
    seed: u64,
) -> Result<CompareReport> {
    compare_priors_with(scenario, priors, replications, seed, &CompareOptions::default())
}

fn overlap_below(d: f64, step: f64, c: f64) -> f64 {
    ((c - (d - 0.5 * step)) / step).clamp(0.0, 1.0)
}

pub fn compare_priors_with(
    scenario: &Scenario,
    priors: &[ComparisonPrior],
    replications: usize,
    seed: u64,
    opts: &CompareOptions,
) -> Result<CompareReport> {
    scenario.validate()?;
    if priors.is_empty() {
        return Err(domain("no priors to compare"));
    }
    let spec = GridSpec { points: opts.grid_points, ..GridSpec::default() };
    let mut models = Vec::with_capacity(priors.len());
    let mut grids = Vec::with_capacity(priors.len());
    for p in priors {
        let model = VcmModelSpec::new(VcmFamily::Ar1, p.model_prior()?)?
            .with_tau(opts.tau)?
            .with_alpha_var(opts.alpha_var)?
            .with_beta0_var(opts.beta0_var)?;
        grids.push(Grid::for_model(&model, &spec)?);
        models.push(model);
    }
    // All AR1 priors live on d in [0, sqrt 2], so the cells coincide and the
    // evidence is computed once per dataset.
    let shared = grids.iter().all(|g| {
        g.cells.len() == grids[0].cells.len() && g.cells.iter().zip(&grids[0].cells).all(|(a, b)| a.hyper == b.hyper)
    });

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..replications).map(|_| master.next_u64()).collect();
    let step = grids[0].axes[0].step;

    let per_rep: Vec<Vec<ReplicationSummary>> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &s)| -> Result<Vec<ReplicationSummary>> {
            let data = simulate_scenario(scenario, s)?;
            let mut shared_lml: Option<Vec<f64>> = None;
            let mut out = Vec::with_capacity(priors.len());
            for (model, grid) in models.iter().zip(&grids) {
                let lml = match (&shared_lml, shared) {
                    (Some(v), true) => v.clone(),
                    _ => {
                        let ev = Evaluator::new(&data, model, EvidenceMethod::Auto)?;
                        let v: Vec<f64> = grid
                            .cells
                            .iter()
                            .map(|c| ev.evaluate(&c.hyper, false).map(|e| e.0))
                            .collect::<Result<_>>()?;
                        shared_lml = Some(v.clone());
                        v
                    }
                };
                let log_post: Vec<f64> = lml.iter().zip(&grid.cells).map(|(l, c)| l + c.log_prior).collect();
                let w = normalize_log_weights(&log_post)?;
                let (mut m, mut m2, mut dm, mut near, mut high) = (0.0, 0.0, 0.0, 0.0, 0.0);
                let d_high = (1.0 - opts.high_rho).sqrt();
                for (c, wi) in grid.cells.iter().zip(&w) {
                    let Hyper::Correlation { rho } = c.hyper else { unreachable!("AR1 grid") };
                    let d = c.distance[0];
                    m += wi * rho;
                    m2 += wi * rho * rho;
                    dm += wi * d;
                    near += wi * overlap_below(d, step, opts.near_base);
                    high += wi * overlap_below(d, step, d_high);
                }
                out.push(ReplicationSummary {
                    replication: r,
                    seed: s,
                    posterior_mean_rho: m,
                    posterior_sd_rho: (m2 - m * m).max(0.0).sqrt(),
                    prob_rho_above: high,
                    prob_near_base: near,
                    posterior_mean_distance: dm,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let reports = priors
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let reps: Vec<ReplicationSummary> = per_rep.iter().map(|r| r[k]).collect();
            let mean = |f: &dyn Fn(&ReplicationSummary) -> f64| {
                if reps.is_empty() {
                    f64::NAN
                } else {
                    reps.iter().map(f).sum::<f64>() / reps.len() as f64
                }
            };
            PriorReport {
                prior: *p,
                aggregate: Aggregate {
                    mean_abs_error: mean(&|r| (r.posterior_mean_rho - scenario.rho_true).abs()),
                    mean_posterior_mean_rho: mean(&|r| r.posterior_mean_rho),
                    mean_prob_rho_above: mean(&|r| r.prob_rho_above),
                    mean_prob_near_base: mean(&|r| r.prob_near_base),
                    mean_posterior_distance: mean(&|r| r.posterior_mean_distance),
                },
                replications: reps,
            }
        })
        .collect();

    Ok(CompareReport {
        scenario: *scenario,
        family: "ar1".into(),
        seed,
        replications,
        options: *opts,
        priors: reports,
    })
}
