//! Hyperparameter grids on the distance scale and the grid posterior.

use rayon::prelude::*;
use serde::Serialize;

use super::evidence::{CellSummary, EvidenceMethod, Evaluator};
use super::{Hyper, ModelPrior, VcmDataset, VcmFamily, VcmModelSpec};
use crate::error::{domain, Error, Result};
use crate::pcpriors::{DistanceDensity, PcPrior};

/// Largest prior mass per axis that may fall outside the grid without a warning.
pub const MAX_OUTSIDE_MASS: f64 = 0.01;

/// Distance below which a cell counts as "near the base model".
const NEAR_BASE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Cells for one-dimensional grids.
    pub points: usize,
    /// Cells per axis for the two-dimensional Matérn grid.
    pub matern_points: usize,
    /// Prior quantiles bounding unbounded distance axes. One-dimensional grids
    /// always start at the base model and use only the upper quantile.
    pub lower_quantile: f64,
    pub upper_quantile: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 101, matern_points: 41, lower_quantile: 0.005, upper_quantile: 0.995 }
    }
}

/// One axis of midpoint cells `lower + (i + 1/2) step` on a distance scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis {
    pub parameter: String,
    /// How the distance relates to the parameter, e.g. `sqrt(1 - rho)`.
    pub distance: String,
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub points: usize,
    pub prior_mass_outside: f64,
}

impl GridAxis {
    fn new(parameter: &str, distance: &str, lower: f64, upper: f64, points: usize, outside: f64) -> Self {
        Self {
            parameter: parameter.into(),
            distance: distance.into(),
            lower,
            upper,
            step: (upper - lower) / points as f64,
            points,
            prior_mass_outside: outside,
        }
    }

    fn midpoint(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub hyper: Hyper,
    /// Cell centre on each axis' distance scale.
    pub distance: Vec<f64>,
    /// Log prior mass of the cell.
    pub log_prior: f64,
    /// Position along each axis.
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub axes: Vec<GridAxis>,
    pub cells: Vec<GridCell>,
}

fn check_spec(spec: &GridSpec) -> Result<()> {
    if spec.points == 0 || spec.matern_points == 0 {
        return Err(Error::Grid("grid needs at least one point per axis".into()));
    }
    let (lo, hi) = (spec.lower_quantile, spec.upper_quantile);
    if !(lo >= 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::Grid(format!("grid quantiles must satisfy 0 <= lower < upper < 1, got {lo}, {hi}")));
    }
    Ok(())
}

/// Quantile of an exponential(rate) distance.
fn exp_quantile(rate: f64, p: f64) -> f64 {
    -(-p).ln_1p() / rate
}

impl Grid {
    /// Cells evenly spaced in the distance to the base model, weighted by the
    /// prior mass they carry.
    pub fn for_model(model: &VcmModelSpec, spec: &GridSpec) -> Result<Self> {
        check_spec(spec)?;
        model.validate()?;
        if let (VcmFamily::Matern { .. }, ModelPrior::Pc(PcPrior::MaternJoint(p))) = (&model.family, &model.prior) {
            let (lp, lt) = (p.lambda_phi(), p.lambda_tau());
            let (ql, qu) = (spec.lower_quantile, spec.upper_quantile);
            let outside = ql + (1.0 - qu);
            let m = spec.matern_points;
            let a_phi =
                GridAxis::new("phi", "1/phi", exp_quantile(lp, ql), exp_quantile(lp, qu), m, outside);
            let a_tau =
                GridAxis::new("tau", "1/sqrt(tau)", exp_quantile(lt, ql), exp_quantile(lt, qu), m, outside);
            let mut cells = Vec::with_capacity(m * m);
            for i in 0..m {
                let k = a_phi.midpoint(i);
                for j in 0..m {
                    let s = a_tau.midpoint(j);
                    let log_prior =
                        lp.ln() - lp * k + a_phi.step.ln() + lt.ln() - lt * s + a_tau.step.ln();
                    cells.push(GridCell {
                        hyper: Hyper::Matern { phi: 1.0 / k, tau: 1.0 / (s * s) },
                        distance: vec![k, s],
                        log_prior,
                        index: vec![i, j],
                    });
                }
            }
            return Ok(Self { axes: vec![a_phi, a_tau], cells });
        }

        let prior = model.prior.scalar().ok_or_else(|| domain("prior has no scalar form"))?;
        let dd = prior.distance_density();
        let upper = match dd {
            DistanceDensity::TruncatedExponential { rate, upper } if upper.is_infinite() => {
                exp_quantile(rate, spec.upper_quantile)
            }
            other => other.upper(),
        };
        let outside = 1.0 - dd.cdf(upper);
        let (parameter, distance) =
            if model.family.is_correlation() { ("rho", "sqrt(1 - rho)") } else { ("tau", "1/sqrt(tau)") };
        let axis = GridAxis::new(parameter, distance, 0.0, upper, spec.points, outside);
        let cells = (0..spec.points)
            .map(|i| {
                let d = axis.midpoint(i);
                let v = prior.from_distance(d);
                let hyper =
                    if model.family.is_correlation() { Hyper::Correlation { rho: v } } else { Hyper::Precision { tau: v } };
                GridCell { hyper, distance: vec![d], log_prior: dd.log_density(d) + axis.step.ln(), index: vec![i] }
            })
            .collect();
        Ok(Self { axes: vec![axis], cells })
    }

    /// A grid of explicit cells with no axis structure.
    pub fn from_cells(cells: Vec<GridCell>) -> Self {
        Self { axes: Vec::new(), cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.axes
            .iter()
            .filter(|a| a.prior_mass_outside > MAX_OUTSIDE_MASS + 1e-12)
            .map(|a| format!("{:.4} of the prior mass of {} lies outside the grid", a.prior_mass_outside, a.parameter))
            .collect()
    }
}

/// Normalized weights from unnormalized log values, by log-sum-exp in index order.
pub fn normalize_log_weights(log_post: &[f64]) -> Result<Vec<f64>> {
    if log_post.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if log_post.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Grid("log posterior is NaN or +inf in some cell".into()));
    }
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Grid("every cell has zero posterior mass".into()));
    }
    let mut total = 0.0;
    for v in log_post {
        total += (v - max).exp();
    }
    Ok(log_post.iter().map(|v| (v - max).exp() / total).collect())
}

/// Posterior summary of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisSummary {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    /// Parameter value of the cell with the largest marginal weight.
    pub mode: f64,
    pub distance_mean: f64,
    /// Posterior probability that the distance is below 0.1.
    pub prob_near_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPosterior {
    pub family: String,
    pub axes: Vec<GridAxis>,
    pub cells: Vec<GridCell>,
    pub log_marginal: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub weights: Vec<f64>,
    pub hyper_summaries: Vec<AxisSummary>,
    pub alpha_mean: f64,
    pub beta0_mean: f64,
    /// `E[beta_t | y]`, mixed over the grid.
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    /// `E[beta0 + beta_t | y]`.
    pub coefficient_mean: Vec<f64>,
    /// `E[(beta0 + beta_t) x_t | y]`.
    pub effect_mean: Vec<f64>,
    /// Per-cell conditional moments, omitted from JSON.
    #[serde(skip)]
    pub beta_summaries: Vec<CellSummary>,
    pub warnings: Vec<String>,
}

fn axis_value(hyper: &Hyper, axis: usize) -> f64 {
    match (*hyper, axis) {
        (Hyper::Correlation { rho }, _) => rho,
        (Hyper::Precision { tau }, _) => tau,
        (Hyper::Matern { phi, .. }, 0) => phi,
        (Hyper::Matern { tau, .. }, _) => tau,
    }
}

fn axis_name(hyper: &Hyper, axis: usize) -> &'static str {
    match (hyper, axis) {
        (Hyper::Correlation { .. }, _) => "rho",
        (Hyper::Precision { .. }, _) | (Hyper::Matern { .. }, 1) => "tau",
        (Hyper::Matern { .. }, _) => "phi",
    }
}

impl GridPosterior {
    /// Posterior probability that the distance on `axis` is below `c`. Cells
    /// straddling `c` contribute the covered fraction of their width.
    pub fn prob_distance_below(&self, axis: usize, c: f64) -> f64 {
        let step = self.axes.get(axis).map(|a| a.step);
        self.cells
            .iter()
            .zip(&self.weights)
            .map(|(cell, w)| {
                let d = cell.distance[axis];
                let frac = match step {
                    Some(h) if h > 0.0 => ((c - (d - 0.5 * h)) / h).clamp(0.0, 1.0),
                    _ => f64::from(u8::from(d < c)),
                };
                w * frac
            })
            .sum()
    }

    /// Posterior mean of the parameter on `axis`.
    pub fn posterior_mean(&self, axis: usize) -> f64 {
        self.cells.iter().zip(&self.weights).map(|(c, w)| w * axis_value(&c.hyper, axis)).sum()
    }
}

pub(crate) fn evaluate_cells(
    evaluator: &Evaluator<'_>,
    grid: &Grid,
    summary: bool,
) -> Result<Vec<(f64, Option<CellSummary>)>> {
    // Ordered collect: the reduction below never depends on thread timing.
    grid.cells.par_iter().map(|c| evaluator.evaluate(&c.hyper, summary)).collect()
}

/// Weights, hyperparameter summaries and grid-mixed coefficient estimates.
pub fn fit_grid(data: &VcmDataset, model: &VcmModelSpec, grid: &Grid) -> Result<GridPosterior> {
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    let evaluator = Evaluator::new(data, model, EvidenceMethod::Auto)?;
    let evaluated = evaluate_cells(&evaluator, grid, true)?;
    let log_marginal: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let log_prior: Vec<f64> = grid.cells.iter().map(|c| c.log_prior).collect();
    let log_post: Vec<f64> = log_marginal.iter().zip(&log_prior).map(|(a, b)| a + b).collect();
    let weights = normalize_log_weights(&log_post)?;
    let beta_summaries: Vec<CellSummary> = evaluated.into_iter().map(|e| e.1.expect("summary requested")).collect();

    let n = data.n();
    let mut alpha_mean = 0.0;
    let mut beta0_mean = 0.0;
    let mut beta_mean = vec![0.0; n];
    let mut beta_m2 = vec![0.0; n];
    let mut coef_mean = vec![0.0; n];
    for (s, &w) in beta_summaries.iter().zip(&weights) {
        alpha_mean += w * s.alpha_mean;
        beta0_mean += w * s.beta0_mean;
        for t in 0..n {
            beta_mean[t] += w * s.beta_mean[t];
            beta_m2[t] += w * (s.beta_var[t] + s.beta_mean[t] * s.beta_mean[t]);
            coef_mean[t] += w * (s.beta0_mean + s.beta_mean[t]);
        }
    }
    let beta_sd = beta_m2.iter().zip(&beta_mean).map(|(m2, m)| (m2 - m * m).max(0.0).sqrt()).collect();
    let effect_mean = coef_mean.iter().zip(&data.x).map(|(c, x)| c * x).collect();

    let mut warnings = grid.warnings();
    let mut post = GridPosterior {
        family: model.family.name().into(),
        axes: grid.axes.clone(),
        cells: grid.cells.clone(),
        log_marginal,
        log_prior,
        weights,
        hyper_summaries: Vec::new(),
        alpha_mean,
        beta0_mean,
        beta_mean,
        beta_sd,
        coefficient_mean: coef_mean,
        effect_mean,
        beta_summaries,
        warnings: Vec::new(),
    };
    let dims = grid.cells[0].distance.len();
    for axis in 0..dims {
        post.hyper_summaries.push(summarize_axis(&post, axis));
        if let Some(a) = post.axes.get(axis) {
            // Unbounded axes are cut at a prior quantile; mass piling up at
            // the far edge means the data want values beyond the grid.
            let edge: f64 = post
                .cells
                .iter()
                .zip(&post.weights)
                .filter(|(c, _)| c.index[axis] + 1 == a.points)
                .map(|(_, w)| w)
                .sum();
            if a.prior_mass_outside > 0.0 && edge > MAX_OUTSIDE_MASS {
                warnings.push(format!("{edge:.4} of the posterior mass of {} sits in the outermost grid cell", a.parameter));
            }
        }
    }
    post.warnings = warnings;
    Ok(post)
}

fn summarize_axis(post: &GridPosterior, axis: usize) -> AxisSummary {
    let hyper0 = &post.cells[0].hyper;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut dmean = 0.0;
    for (c, w) in post.cells.iter().zip(&post.weights) {
        let v = axis_value(&c.hyper, axis);
        mean += w * v;
        m2 += w * v * v;
        dmean += w * c.distance[axis];
    }
    // mode of the axis marginal
    let mut marginal: Vec<(usize, f64, f64)> = Vec::new();
    for (c, w) in post.cells.iter().zip(&post.weights) {
        let i = c.index.get(axis).copied().unwrap_or(0);
        match marginal.iter_mut().find(|m| m.0 == i) {
            Some(m) => m.2 += w,
            None => marginal.push((i, axis_value(&c.hyper, axis), *w)),
        }
    }
    if post.axes.is_empty() {
        marginal = post.cells.iter().zip(&post.weights).map(|(c, w)| (0, axis_value(&c.hyper, axis), *w)).collect();
    }
    let mode = marginal.iter().fold((f64::NAN, f64::NEG_INFINITY), |acc, m| if m.2 > acc.1 { (m.1, m.2) } else { acc }).0;
    AxisSummary {
        parameter: axis_name(hyper0, axis).into(),
        mean,
        sd: (m2 - mean * mean).max(0.0).sqrt(),
        mode,
        distance_mean: dmean,
        prob_near_base: post.prob_distance_below(axis, NEAR_BASE),
    }
}
