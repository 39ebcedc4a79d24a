//! Marginal likelihood and conditional moments for one hyperparameter cell.
//!
//! The dense path works with the marginal covariance
//! `V = sigma^2 I + D Sigma D + s_a 1 1^T + s_b x x^T`, `D = diag(x)`.
//! The AR1 family also has an O(n) path in precision form: the posterior
//! precision of `(beta, alpha, beta0)` is a tridiagonal block bordered by
//! two dense columns, which is handled through a 2x2 Schur complement.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Hyper, VcmDataset, VcmFamily, VcmModelSpec};
use crate::error::{domain, Error, Result};
use crate::gmrf::{build_icar_structure, build_rw_structure_at, Ar1Corr, ExchangeableCorr, MaternCorr};

/// Conditional posterior moments of `(alpha, beta0, beta)` given `y` and the
/// hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub alpha_mean: f64,
    pub alpha_var: f64,
    pub beta0_mean: f64,
    pub beta0_var: f64,
    pub beta_mean: Vec<f64>,
    pub beta_var: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceMethod {
    /// Sparse AR1 path where it applies, dense otherwise.
    #[default]
    Auto,
    Dense,
}

enum Prepared {
    Exchangeable,
    Ar1,
    /// Constrained covariance `K^+` of the scaled structure.
    Intrinsic(DMatrix<f64>),
    Matern { nu: f64, coords: Vec<[f64; 2]> },
}

pub(crate) struct Evaluator<'a> {
    data: &'a VcmDataset,
    model: &'a VcmModelSpec,
    prepared: Prepared,
    method: EvidenceMethod,
}

fn check_ordered(t: &[f64]) -> Result<()> {
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("rows must be sorted by strictly increasing t"));
    }
    Ok(())
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(data: &'a VcmDataset, model: &'a VcmModelSpec, method: EvidenceMethod) -> Result<Self> {
        model.validate()?;
        let prepared = match &model.family {
            VcmFamily::Exchangeable => Prepared::Exchangeable,
            VcmFamily::Ar1 => {
                check_ordered(&data.t)?;
                Prepared::Ar1
            }
            VcmFamily::Rw1 | VcmFamily::Rw2 => {
                check_ordered(&data.t)?;
                let order = if model.family == VcmFamily::Rw1 { 1 } else { 2 };
                let s = build_rw_structure_at(&data.t, order)?.scaled()?;
                Prepared::Intrinsic(s.generalized_inverse()?)
            }
            VcmFamily::Icar { graph } => {
                if graph.n() != data.n() {
                    return Err(Error::Dimension { expected: data.n(), got: graph.n() });
                }
                let s = build_icar_structure(graph)?.scaled()?;
                Prepared::Intrinsic(s.generalized_inverse()?)
            }
            VcmFamily::Matern { nu } => {
                let coords = data.coords.clone().ok_or_else(|| domain("Matérn family needs lat/lon coordinates"))?;
                Prepared::Matern { nu: *nu, coords }
            }
        };
        Ok(Self { data, model, prepared, method })
    }

    /// `log p(y | xi)` and, on request, the conditional moments.
    pub(crate) fn evaluate(&self, hyper: &Hyper, summary: bool) -> Result<(f64, Option<CellSummary>)> {
        if let (Prepared::Ar1, Hyper::Correlation { rho }) = (&self.prepared, hyper) {
            if self.method == EvidenceMethod::Auto && !self.model.constrained() {
                return ar1_precision_path(self.data, self.model, *rho, summary);
            }
        }
        let sigma = self.prior_covariance(hyper)?;
        dense_path(self.data, self.model, &sigma, summary)
    }

    /// Prior covariance of `beta` in the cell, constraint applied.
    fn prior_covariance(&self, hyper: &Hyper) -> Result<DMatrix<f64>> {
        let n = self.data.n();
        let tau_fixed = self.model.tau;
        let mut sigma = match (&self.prepared, hyper) {
            (Prepared::Exchangeable, Hyper::Correlation { rho }) => ExchangeableCorr::new(n, *rho)?.matrix() / tau_fixed,
            (Prepared::Ar1, Hyper::Correlation { rho }) => Ar1Corr::new(n, *rho)?.matrix() / tau_fixed,
            (Prepared::Intrinsic(ginv), Hyper::Precision { tau }) => {
                check_precision(*tau)?;
                ginv / *tau
            }
            (Prepared::Matern { nu, coords }, Hyper::Matern { phi, tau }) => {
                check_precision(*tau)?;
                MaternCorr::new(*nu, *phi, coords.clone())?.matrix()? / *tau
            }
            _ => {
                return Err(domain(format!("hyperparameters {hyper:?} do not match the {} family", self.model.family.name())))
            }
        };
        if self.model.constrained() && !self.model.family.is_intrinsic() {
            // Sigma - Sigma 1 (1' Sigma 1)^-1 1' Sigma
            let s1: DVector<f64> = sigma.column_sum();
            let total = s1.sum();
            if total > 0.0 {
                sigma -= &s1 * s1.transpose() / total;
            }
        }
        Ok(sigma)
    }
}

fn check_precision(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!("precision must be positive and finite, got {tau}")));
    }
    Ok(())
}

fn dense_path(data: &VcmDataset, model: &VcmModelSpec, sigma: &DMatrix<f64>, summary: bool) -> Result<(f64, Option<CellSummary>)> {
    let n = data.n();
    let x = &data.x;
    let (sa, sb) = (model.alpha_var, model.beta0_var);
    let mut v = DMatrix::from_fn(n, n, |i, j| x[i] * sigma[(i, j)] * x[j] + sa + sb * x[i] * x[j]);
    for i in 0..n {
        v[(i, i)] += data.noise_sd * data.noise_sd;
    }
    let chol = v.cholesky().ok_or_else(|| Error::NotPositiveDefinite("marginal covariance of y".into()))?;
    let l = chol.l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let y = DVector::from_column_slice(&data.y);
    let w = chol.solve(&y);
    let lml = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det + y.dot(&w));
    if !summary {
        return Ok((lml, None));
    }

    // Cov(beta, y) = Sigma D; the conditional covariance subtracts
    // (L^-1 D Sigma)^T (L^-1 D Sigma).
    let mut rhs = DMatrix::zeros(n, n + 2);
    for i in 0..n {
        rhs[(i, 0)] = 1.0;
        rhs[(i, 1)] = x[i];
        for j in 0..n {
            rhs[(i, j + 2)] = x[i] * sigma[(i, j)];
        }
    }
    let z = l.solve_lower_triangular(&rhs).ok_or_else(|| Error::NotPositiveDefinite("Cholesky factor".into()))?;
    let norm2 = |c: usize| z.column(c).norm_squared();
    let xw = DVector::from_fn(n, |i, _| x[i] * w[i]);
    let beta_mean = (sigma * &xw).iter().copied().collect();
    let beta_var = (0..n).map(|t| (sigma[(t, t)] - norm2(t + 2)).max(0.0)).collect();
    Ok((
        lml,
        Some(CellSummary {
            alpha_mean: sa * w.sum(),
            alpha_var: (sa - sa * sa * norm2(0)).max(0.0),
            beta0_mean: sb * xw.sum(),
            beta0_var: (sb - sb * sb * norm2(1)).max(0.0),
            beta_mean,
            beta_var,
        }),
    ))
}

/// Symmetric tridiagonal `T = L D L^T`, `L` unit lower bidiagonal.
struct TriLdl {
    d: Vec<f64>,
    /// `l[i]` is `L[i, i-1]`; `l[0]` is unused.
    l: Vec<f64>,
}

impl TriLdl {
    fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n];
        d[0] = diag[0];
        for i in 1..n {
            if !(d[i - 1] > 0.0) {
                return Err(Error::NotPositiveDefinite("tridiagonal posterior precision".into()));
            }
            l[i] = off[i - 1] / d[i - 1];
            d[i] = diag[i] - l[i] * off[i - 1];
        }
        if !(d[n - 1] > 0.0) {
            return Err(Error::NotPositiveDefinite("tridiagonal posterior precision".into()));
        }
        Ok(Self { d, l })
    }

    fn log_det(&self) -> f64 {
        self.d.iter().map(|v| v.ln()).sum()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut z = b.to_vec();
        for i in 1..n {
            z[i] -= self.l[i] * z[i - 1];
        }
        for i in 0..n {
            z[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            z[i] -= self.l[i + 1] * z[i + 1];
        }
        z
    }

    /// Diagonal of `T^-1` by the backward recursion on the factor.
    fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.d.len();
        let mut s = vec![0.0; n];
        s[n - 1] = 1.0 / self.d[n - 1];
        for i in (0..n - 1).rev() {
            s[i] = 1.0 / self.d[i] + self.l[i + 1] * self.l[i + 1] * s[i + 1];
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn ar1_precision_path(data: &VcmDataset, model: &VcmModelSpec, rho: f64, summary: bool) -> Result<(f64, Option<CellSummary>)> {
    let n = data.n();
    let nf = n as f64;
    let s2 = data.noise_sd * data.noise_sd;
    let tau = model.tau;
    let (x, y) = (&data.x, &data.y);
    let (qd, qo) = Ar1Corr::new(n, rho)?.precision_bands();

    let diag: Vec<f64> = (0..n).map(|i| tau * qd[i] + x[i] * x[i] / s2).collect();
    let off: Vec<f64> = qo.iter().map(|o| tau * o).collect();
    let t = TriLdl::new(&diag, &off)?;

    // Border columns: cross terms of beta with alpha and with beta0.
    let b1: Vec<f64> = x.iter().map(|v| v / s2).collect();
    let b2: Vec<f64> = x.iter().map(|v| v * v / s2).collect();
    let b_beta: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b / s2).collect();
    let b_c = [y.iter().sum::<f64>() / s2, dot(x, y) / s2];

    let u = t.solve(&b_beta);
    let w1 = t.solve(&b1);
    let w2 = t.solve(&b2);
    let sum_x = x.iter().sum::<f64>();
    let sum_x2 = dot(x, x);
    let c11 = nf / s2 + 1.0 / model.alpha_var;
    let c12 = sum_x / s2;
    let c22 = sum_x2 / s2 + 1.0 / model.beta0_var;
    let s11 = c11 - dot(&b1, &w1);
    let s12 = c12 - dot(&b1, &w2);
    let s22 = c22 - dot(&b2, &w2);
    let det_s = s11 * s22 - s12 * s12;
    if !(det_s > 0.0 && s11 > 0.0) {
        return Err(Error::NotPositiveDefinite("Schur complement of the posterior precision".into()));
    }
    let r1 = b_c[0] - dot(&b1, &u);
    let r2 = b_c[1] - dot(&b2, &u);
    let z_a = (s22 * r1 - s12 * r2) / det_s;
    let z_b = (s11 * r2 - s12 * r1) / det_s;
    let z_beta: Vec<f64> = (0..n).map(|i| u[i] - w1[i] * z_a - w2[i] * z_b).collect();
    let quad = dot(&b_beta, &z_beta) + b_c[0] * z_a + b_c[1] * z_b;

    let log_prior_prec =
        nf * tau.ln() - (nf - 1.0) * (1.0 - rho * rho).ln() - model.alpha_var.ln() - model.beta0_var.ln();
    let log_post_prec = t.log_det() + det_s.ln();
    let lml = -0.5 * nf * (2.0 * PI * s2).ln() - dot(y, y) / (2.0 * s2) + 0.5 * log_prior_prec - 0.5 * log_post_prec
        + 0.5 * quad;
    if !summary {
        return Ok((lml, None));
    }
    // inverse of S: [[s22, -s12], [-s12, s11]] / det
    let (i11, i12, i22) = (s22 / det_s, -s12 / det_s, s11 / det_s);
    let tinv = t.inverse_diagonal();
    let beta_var = (0..n)
        .map(|i| tinv[i] + w1[i] * w1[i] * i11 + 2.0 * w1[i] * w2[i] * i12 + w2[i] * w2[i] * i22)
        .collect();
    Ok((
        lml,
        Some(CellSummary {
            alpha_mean: z_a,
            alpha_var: i11,
            beta0_mean: z_b,
            beta0_var: i22,
            beta_mean: z_beta,
            beta_var,
        }),
    ))
}

/// `log p(y | xi)` with `(alpha, beta0, beta)` integrated out.
pub fn log_marginal_likelihood(data: &VcmDataset, model: &VcmModelSpec, hyper: &Hyper) -> Result<f64> {
    log_marginal_likelihood_with(data, model, hyper, EvidenceMethod::Auto)
}

pub fn log_marginal_likelihood_with(
    data: &VcmDataset,
    model: &VcmModelSpec,
    hyper: &Hyper,
    method: EvidenceMethod,
) -> Result<f64> {
    Ok(Evaluator::new(data, model, method)?.evaluate(hyper, false)?.0)
}

pub fn conditional_summary(data: &VcmDataset, model: &VcmModelSpec, hyper: &Hyper) -> Result<CellSummary> {
    conditional_summary_with(data, model, hyper, EvidenceMethod::Auto)
}

pub fn conditional_summary_with(
    data: &VcmDataset,
    model: &VcmModelSpec,
    hyper: &Hyper,
    method: EvidenceMethod,
) -> Result<CellSummary> {
    let (_, s) = Evaluator::new(data, model, method)?.evaluate(hyper, true)?;
    Ok(s.expect("summary requested"))
}
