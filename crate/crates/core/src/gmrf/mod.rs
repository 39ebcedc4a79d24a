//! Covariance and structure matrices for the varying-coefficient families.
//!
//! Proper families (exchangeable, AR1, Matérn) are described by correlation
//! matrices. Intrinsic families (RW1, RW2, ICAR) are described by a rank
//! deficient structure matrix `K` whose null space holds the polynomial the
//! field is allowed to deviate from.

mod bessel;
mod graph;
mod matern;

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use bessel::bessel_k;
pub use graph::AdjacencyGraph;
pub use matern::{build_matern, matern_corr, MaternCorr};

use crate::error::{domain, Error, Result};

/// Relative eigenvalue threshold for numerical rank: `lambda < n * eps * lambda_max`.
pub const RANK_EPS: f64 = 1e-12;

/// Compound symmetry: unit diagonal, `rho` everywhere else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeableCorr {
    pub n: usize,
    pub rho: f64,
}

impl ExchangeableCorr {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("exchangeable model needs n >= 2, got {n}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(domain(format!("exchangeable correlation must be in [0, 1), got {rho}")));
        }
        Ok(Self { n, rho })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { 1.0 } else { self.rho })
    }

    /// `(1 - rho)^(n-1) (1 + (n-1) rho)`
    pub fn log_det(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) * (1.0 - self.rho).ln() + (1.0 + (n - 1.0) * self.rho).ln()
    }
}

pub fn build_exchangeable(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    Ok(ExchangeableCorr::new(n, rho)?.matrix())
}

/// Stationary AR1 correlation `rho^|i-j|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Corr {
    pub n: usize,
    pub rho: f64,
}

impl Ar1Corr {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("AR1 model needs n >= 2, got {n}")));
        }
        if !(rho.abs() < 1.0) {
            return Err(domain(format!("AR1 correlation must satisfy |rho| < 1, got {rho}")));
        }
        Ok(Self { n, rho })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let powers: Vec<f64> = (0..self.n).map(|k| self.rho.powi(k as i32)).collect();
        DMatrix::from_fn(self.n, self.n, |i, j| powers[i.abs_diff(j)])
    }

    /// The tridiagonal inverse, as `(diagonal, off_diagonal)`.
    pub fn precision_bands(&self) -> (Vec<f64>, Vec<f64>) {
        let s = 1.0 / (1.0 - self.rho * self.rho);
        let mut diag = vec![s * (1.0 + self.rho * self.rho); self.n];
        diag[0] = s;
        diag[self.n - 1] = s;
        (diag, vec![-s * self.rho; self.n - 1])
    }

    pub fn precision(&self) -> DMatrix<f64> {
        let (diag, off) = self.precision_bands();
        let mut q = DMatrix::from_diagonal(&DVector::from_vec(diag));
        for (i, &o) in off.iter().enumerate() {
            q[(i, i + 1)] = o;
            q[(i + 1, i)] = o;
        }
        q
    }

    pub fn log_det(&self) -> f64 {
        (self.n as f64 - 1.0) * (1.0 - self.rho * self.rho).ln()
    }
}

pub fn build_ar1(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    Ok(Ar1Corr::new(n, rho)?.matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IgmrfFamily {
    Rw1,
    Rw2,
    Icar,
}

/// Structure matrix of an intrinsic GMRF with its declared rank deficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct IgmrfStructure {
    k: DMatrix<f64>,
    rank_deficiency: usize,
    scaled: bool,
    family: IgmrfFamily,
}

impl IgmrfStructure {
    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn rank_deficiency(&self) -> usize {
        self.rank_deficiency
    }

    pub fn rank(&self) -> usize {
        self.n() - self.rank_deficiency
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn family(&self) -> IgmrfFamily {
        self.family
    }

    /// Basis of the declared null space: the constant vector, plus the
    /// centred linear trend for RW2.
    pub fn null_space(&self) -> Vec<DVector<f64>> {
        let n = self.n();
        let mut out = vec![DVector::from_element(n, 1.0)];
        if self.rank_deficiency == 2 {
            let mid = (n as f64 - 1.0) / 2.0;
            out.push(DVector::from_fn(n, |i, _| i as f64 - mid));
        }
        out
    }

    /// Eigenpairs sorted by ascending eigenvalue, after checking that exactly
    /// `rank_deficiency` eigenvalues vanish.
    pub fn spectrum(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (values, vectors) = sorted_eigen(&self.k);
        let n = self.n();
        let lmax = values[n - 1].max(0.0);
        let zero_tol = n as f64 * RANK_EPS * lmax;
        // RW2 eigenvalues shrink like n^-4, so the retained part is checked
        // against a tolerance near machine precision rather than RANK_EPS.
        let keep_tol = 10.0 * n as f64 * f64::EPSILON * lmax;
        let r = self.rank_deficiency;
        let zeros = values.iter().take(r).filter(|v| v.abs() < zero_tol).count();
        if zeros < r {
            return Err(Error::Rank { expected: n - r, found: n - zeros });
        }
        if r < n && values[r] <= keep_tol {
            let found = values.iter().filter(|&&v| v > keep_tol).count();
            return Err(Error::Rank { expected: n - r, found });
        }
        Ok((values, vectors))
    }

    /// Generalized inverse restricted to the complement of the null space.
    ///
    /// This is the covariance of the field conditioned on the null-space
    /// constraints (sum-to-zero, and zero linear trend for RW2).
    pub fn generalized_inverse(&self) -> Result<DMatrix<f64>> {
        let (values, vectors) = self.spectrum()?;
        let r = self.rank_deficiency;
        let n = self.n();
        let mut scaled = vectors.columns(r, n - r).into_owned();
        for (c, lambda) in values.iter().skip(r).enumerate() {
            scaled.column_mut(c).scale_mut(1.0 / lambda);
        }
        let mut out = scaled * vectors.columns(r, n - r).transpose();
        out = (&out + out.transpose()) * 0.5;
        Ok(out)
    }

    /// Non-zero eigenvalues and their eigenvectors (columns).
    pub fn range_space(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (values, vectors) = self.spectrum()?;
        let r = self.rank_deficiency;
        let n = self.n();
        Ok((values.rows(r, n - r).into_owned(), vectors.columns(r, n - r).into_owned()))
    }

    /// `log |K|*` over the declared non-null eigenvalues.
    pub fn log_det(&self) -> Result<f64> {
        let (values, _) = self.range_space()?;
        Ok(values.iter().map(|v| v.ln()).sum())
    }

    pub fn scaled(self) -> Result<Self> {
        scale_structure(&self)
    }
}

fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `D^T D` for the `order`-th difference operator on `n` equally spaced points.
pub fn build_rw_structure(n: usize, order: usize) -> Result<IgmrfStructure> {
    let family = match order {
        1 => IgmrfFamily::Rw1,
        2 => IgmrfFamily::Rw2,
        _ => return Err(domain(format!("random walk order must be 1 or 2, got {order}"))),
    };
    if n < order + 2 {
        return Err(domain(format!("RW{order} needs at least {} locations, got {n}", order + 2)));
    }
    let stencil: &[f64] = if order == 1 { &[-1.0, 1.0] } else { &[1.0, -2.0, 1.0] };
    let mut d = DMatrix::zeros(n - order, n);
    for row in 0..(n - order) {
        for (k, &s) in stencil.iter().enumerate() {
            d[(row, row + k)] = s;
        }
    }
    Ok(IgmrfStructure {
        k: d.transpose() * d,
        rank_deficiency: order,
        scaled: false,
        family,
    })
}

/// Like [`build_rw_structure`], but checks that `locations` are equally spaced.
pub fn build_rw_structure_at(locations: &[f64], order: usize) -> Result<IgmrfStructure> {
    if locations.len() >= 2 {
        let step = locations[1] - locations[0];
        if !(step > 0.0) {
            return Err(domain("RW locations must be strictly increasing"));
        }
        let tol = 1e-9 * step.abs().max(1.0);
        for w in locations.windows(2) {
            if ((w[1] - w[0]) - step).abs() > tol {
                return Err(domain(
                    "irregularly spaced RW locations are not supported; use equally spaced locations",
                ));
            }
        }
    }
    build_rw_structure(locations.len(), order)
}

/// ICAR structure: `K_ii` = number of neighbours, `K_ij = -1` for neighbours.
pub fn build_icar_structure(graph: &AdjacencyGraph) -> Result<IgmrfStructure> {
    let n = graph.n();
    if n < 2 {
        return Err(domain("ICAR model needs at least 2 regions"));
    }
    let components = graph.components();
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let mut k = DMatrix::zeros(n, n);
    for (i, j) in graph.edges() {
        k[(i, j)] = -1.0;
        k[(j, i)] = -1.0;
        k[(i, i)] += 1.0;
        k[(j, j)] += 1.0;
    }
    Ok(IgmrfStructure {
        k,
        rank_deficiency: 1,
        scaled: false,
        family: IgmrfFamily::Icar,
    })
}

/// Rescales `K` so the constrained marginal variances have geometric mean 1.
pub fn scale_structure(structure: &IgmrfStructure) -> Result<IgmrfStructure> {
    let ginv = structure.generalized_inverse()?;
    let n = structure.n() as f64;
    let log_gm = (0..structure.n()).map(|i| ginv[(i, i)].ln()).sum::<f64>() / n;
    let c = log_gm.exp();
    Ok(IgmrfStructure {
        k: &structure.k * c,
        rank_deficiency: structure.rank_deficiency,
        scaled: true,
        family: structure.family,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralizedLogDet {
    pub log_det: f64,
    pub rank: usize,
}

/// Sum of log eigenvalues above the numerical-rank threshold.
pub fn generalized_log_det(k: &DMatrix<f64>) -> GeneralizedLogDet {
    let n = k.nrows();
    if n == 0 {
        return GeneralizedLogDet { log_det: 0.0, rank: 0 };
    }
    let eig = SymmetricEigen::new(k.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = n as f64 * RANK_EPS * lmax;
    let kept: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&v| v >= tol && v > 0.0).collect();
    GeneralizedLogDet {
        log_det: kept.iter().map(|v| v.ln()).sum(),
        rank: kept.len(),
    }
}

/// A model family together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CovarianceSpec {
    Exchangeable { n: usize, rho: f64 },
    Ar1 { n: usize, rho: f64 },
    Rw1 { n: usize, scaled: bool },
    Rw2 { n: usize, scaled: bool },
    Icar { graph: AdjacencyGraph, scaled: bool },
    Matern { nu: f64, phi: f64, locations: Vec<[f64; 2]> },
}

/// What a [`CovarianceSpec`] produces.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelMatrix {
    Covariance(DMatrix<f64>),
    Structure(IgmrfStructure),
}

impl ModelMatrix {
    pub fn dense(&self) -> &DMatrix<f64> {
        match self {
            ModelMatrix::Covariance(m) => m,
            ModelMatrix::Structure(s) => s.k(),
        }
    }
}

impl CovarianceSpec {
    pub fn build(&self) -> Result<ModelMatrix> {
        let maybe_scale = |s: IgmrfStructure, scaled: bool| -> Result<ModelMatrix> {
            Ok(ModelMatrix::Structure(if scaled { scale_structure(&s)? } else { s }))
        };
        match self {
            CovarianceSpec::Exchangeable { n, rho } => Ok(ModelMatrix::Covariance(build_exchangeable(*n, *rho)?)),
            CovarianceSpec::Ar1 { n, rho } => Ok(ModelMatrix::Covariance(build_ar1(*n, *rho)?)),
            CovarianceSpec::Rw1 { n, scaled } => maybe_scale(build_rw_structure(*n, 1)?, *scaled),
            CovarianceSpec::Rw2 { n, scaled } => maybe_scale(build_rw_structure(*n, 2)?, *scaled),
            CovarianceSpec::Icar { graph, scaled } => maybe_scale(build_icar_structure(graph)?, *scaled),
            CovarianceSpec::Matern { nu, phi, locations } => {
                Ok(ModelMatrix::Covariance(build_matern(locations, *nu, *phi)?))
            }
        }
    }
}

/// Writes a matrix as headerless row-major CSV.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{}", m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    #[test]
    fn exchangeable_examples() {
        assert_eq!(build_exchangeable(2, 0.0).unwrap(), DMatrix::identity(2, 2));
        let r = build_exchangeable(3, 0.5).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0]));
        let want = 0.5f64.powi(2) * 2.0;
        assert!((r.determinant() - want).abs() < 1e-14);
        assert!((ExchangeableCorr::new(3, 0.5).unwrap().log_det() - want.ln()).abs() < 1e-14);
        assert!(build_exchangeable(3, 1.0).is_err());
        assert!(build_exchangeable(3, -0.1).is_err());
        assert!(build_exchangeable(1, 0.2).is_err());
    }

    #[test]
    fn ar1_examples() {
        assert_eq!(build_ar1(3, 0.0).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(build_ar1(2, 0.9).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]));
        assert!(build_ar1(3, 1.0).is_err());
        assert!(build_ar1(3, -1.0).is_err());

        let inv = build_ar1(3, 0.5).unwrap().try_inverse().unwrap();
        assert!((inv[(0, 1)] + 2.0 / 3.0).abs() < 1e-12);
        assert!((inv[(1, 2)] + 2.0 / 3.0).abs() < 1e-12);
        assert!(inv[(0, 2)].abs() < 1e-12);
    }

    #[test]
    fn ar1_inverse_is_tridiagonal() {
        for &rho in &[-0.95, -0.3, 0.0, 0.4, 0.9, 0.99] {
            let c = Ar1Corr::new(12, rho).unwrap();
            let inv = c.matrix().try_inverse().unwrap();
            for i in 0..12usize {
                for j in 0..12 {
                    if i.abs_diff(j) >= 2 {
                        assert!(inv[(i, j)].abs() < 1e-10);
                    }
                }
            }
            assert!(max_abs(&(inv - c.precision())) < 1e-8);
            let ld = c.matrix().determinant().ln();
            assert!((ld - c.log_det()).abs() < 1e-10);
        }
    }

    #[test]
    fn rw_examples() {
        let rw1 = build_rw_structure(3, 1).unwrap();
        assert_eq!(
            rw1.k(),
            &DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
        let rw2 = build_rw_structure(5, 2).unwrap();
        let mid: Vec<f64> = rw2.k().row(2).iter().copied().collect();
        assert_eq!(mid, vec![1.0, -4.0, 6.0, -4.0, 1.0]);
        assert!(build_rw_structure(2, 1).is_err());
        assert!(build_rw_structure(3, 2).is_err());
        assert!(build_rw_structure(10, 3).is_err());
    }

    #[test]
    fn null_spaces_are_annihilated() {
        for s in [
            build_rw_structure(17, 1).unwrap(),
            build_rw_structure(17, 2).unwrap(),
            build_icar_structure(&AdjacencyGraph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap()).unwrap(),
        ] {
            for v in s.null_space() {
                assert!(max_abs(&DMatrix::from_column_slice(s.n(), 1, (s.k() * v).as_slice())) < 1e-10);
            }
            assert_eq!(s.k(), &s.k().transpose());
            assert_eq!(generalized_log_det(s.k()).rank, s.rank());
        }
    }

    #[test]
    fn icar_examples() {
        let path = build_icar_structure(&AdjacencyGraph::path(3)).unwrap();
        assert_eq!(path.k(), build_rw_structure(3, 1).unwrap().k());
        let ring = build_icar_structure(&AdjacencyGraph::cycle(4)).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, -1.0, 0.0, -1.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, -1.0, 0.0, -1.0, 2.0],
        );
        assert_eq!(ring.k(), &want);
        let split = AdjacencyGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(build_icar_structure(&split), Err(Error::Disconnected { components: 2 })));
    }

    #[test]
    fn scaling_hits_unit_geometric_mean() {
        for s in [build_rw_structure(10, 1).unwrap(), build_rw_structure(10, 2).unwrap()] {
            let scaled = scale_structure(&s).unwrap();
            assert!(scaled.is_scaled());
            let g = scaled.generalized_inverse().unwrap();
            let gm = ((0..10).map(|i| g[(i, i)].ln()).sum::<f64>() / 10.0).exp();
            assert!((gm - 1.0).abs() < 1e-8);
            let again = scale_structure(&scaled).unwrap();
            assert!(max_abs(&(again.k() - scaled.k())) < 1e-10);
        }
        // numpy eigh reference for the scaling constant
        let c = scale_structure(&build_rw_structure(10, 1).unwrap()).unwrap().k()[(0, 0)];
        assert!((c - 1.498_700_974_212_555).abs() < 1e-10);
    }

    #[test]
    fn scaling_rejects_extra_null_directions() {
        let mut s = build_rw_structure(6, 1).unwrap();
        s.k[(5, 5)] = 0.0;
        s.k[(4, 5)] = 0.0;
        s.k[(5, 4)] = 0.0;
        s.k[(4, 4)] = 1.0;
        assert!(matches!(scale_structure(&s), Err(Error::Rank { .. })));
    }

    #[test]
    fn large_rw2_keeps_declared_rank() {
        let s = build_rw_structure(500, 2).unwrap();
        assert!(s.spectrum().is_ok());
    }

    #[test]
    fn generalized_log_det_examples() {
        assert_eq!(generalized_log_det(&DMatrix::identity(3, 3)).log_det, 0.0);
        let rw1 = build_rw_structure(3, 1).unwrap();
        let g = generalized_log_det(rw1.k());
        assert_eq!(g.rank, 2);
        assert!((g.log_det - 3f64.ln()).abs() < 1e-12);
        let tau = 7.5;
        let gt = generalized_log_det(&(rw1.k() * tau));
        assert!((gt.log_det - (2.0 * tau.ln() + g.log_det)).abs() < 1e-12);
    }

    #[test]
    fn irregular_spacing_rejected() {
        assert!(build_rw_structure_at(&[0.0, 1.0, 2.0, 3.0], 1).is_ok());
        assert!(build_rw_structure_at(&[0.0, 1.0, 2.5, 3.0], 1).is_err());
    }

    #[test]
    fn covariance_spec_dispatch() {
        let m = CovarianceSpec::Rw1 { n: 5, scaled: true }.build().unwrap();
        match m {
            ModelMatrix::Structure(s) => assert!(s.is_scaled()),
            _ => panic!("expected structure"),
        }
        let m = CovarianceSpec::Matern { nu: 0.5, phi: 1.0, locations: vec![[0.0, 0.0], [1.0, 0.0]] }
            .build()
            .unwrap();
        assert!((m.dense()[(0, 1)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matrix_csv_is_headerless_row_major() {
        let mut buf = Vec::new();
        write_matrix_csv(&DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 2.0]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,-0.5\n0.25,2\n");
    }
}
