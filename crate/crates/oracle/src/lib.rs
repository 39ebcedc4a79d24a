//! Brute-force reference computations for testing `pcvcm`.
//!
//! Nothing here shares code with the library under test. Quadrature is an
//! adaptive Gauss-Kronrod rule, dense algebra goes through LU rather than
//! Cholesky, and Gaussian evidences are assembled from the full joint
//! covariance of all latent terms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub mod quad {
    //! Adaptive 7/15-point Gauss-Kronrod quadrature on finite intervals.

    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_728,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kron = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for j in 0..7 {
            let x = h * XGK[j];
            let s = f(c - x) + f(c + x);
            kron += WGK[j] * s;
            if j % 2 == 1 {
                gauss += WG[j / 2] * s;
            }
        }
        (kron * h, ((kron - gauss) * h).abs())
    }

    const MAX_INTERVALS: usize = 5000;

    /// Integrates `f` over `[a, b]` to absolute tolerance `tol`, bisecting the
    /// interval with the largest error estimate until the total error meets
    /// `tol` or the interval budget is spent.
    pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        let (v, e) = kronrod(&f, a, b);
        let mut parts = vec![(a, b, v, e)];
        while parts.len() < MAX_INTERVALS {
            let total_err: f64 = parts.iter().map(|p| p.3).sum();
            let total: f64 = parts.iter().map(|p| p.2).sum();
            if total_err <= tol.max(50.0 * f64::EPSILON * total.abs()) {
                break;
            }
            let (k, _) = parts
                .iter()
                .enumerate()
                .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
                .expect("non-empty");
            let (lo, hi, _, _) = parts.swap_remove(k);
            let m = 0.5 * (lo + hi);
            let (v1, e1) = kronrod(&f, lo, m);
            let (v2, e2) = kronrod(&f, m, hi);
            parts.push((lo, m, v1, e1));
            parts.push((m, hi, v2, e2));
        }
        parts.iter().map(|p| p.2).sum()
    }

    /// Integrates over `[a, inf)` with the map `x = a + t / (1 - t)`.
    pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
        integrate(
            |t| {
                if t >= 1.0 {
                    return 0.0;
                }
                let x = a + t / (1.0 - t);
                let jac = 1.0 / ((1.0 - t) * (1.0 - t));
                let v = f(x) * jac;
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            tol,
        )
    }
}

/// log-determinant of a positive-definite matrix through LU.
pub fn log_det_lu(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    (0..m.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}

/// Zero-mean Gaussian KLD(N(0, s1) || N(0, s0)) via LU solves.
pub fn mvn_kld(s0: &DMatrix<f64>, s1: &DMatrix<f64>) -> f64 {
    let n = s0.nrows() as f64;
    let sol = s0.clone().lu().solve(s1).expect("base covariance singular");
    0.5 * (sol.trace() - n - (log_det_lu(s1) - log_det_lu(s0)))
}

/// log N(y; 0, cov) through LU.
pub fn gaussian_log_density(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let sol = cov.clone().lu().solve(y).expect("covariance singular");
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det_lu(cov) + y.dot(&sol))
}

/// Evidence of `y = alpha + (beta0 + beta) * x + eps` built from the joint
/// covariance of the stacked latent vector `(alpha, beta0, beta)`.
pub fn joint_evidence(
    x: &[f64],
    y: &[f64],
    noise_sd: f64,
    alpha_var: f64,
    beta0_var: f64,
    beta_cov: &DMatrix<f64>,
) -> f64 {
    let n = x.len();
    let m = n + 2;
    let mut latent = DMatrix::zeros(m, m);
    latent[(0, 0)] = alpha_var;
    latent[(1, 1)] = beta0_var;
    latent.view_mut((2, 2), (n, n)).copy_from(beta_cov);
    let mut design = DMatrix::zeros(n, m);
    for t in 0..n {
        design[(t, 0)] = 1.0;
        design[(t, 1)] = x[t];
        design[(t, 2 + t)] = x[t];
    }
    let cov = &design * &latent * design.transpose()
        + DMatrix::identity(n, n) * (noise_sd * noise_sd);
    gaussian_log_density(&DVector::from_column_slice(y), &cov)
}

/// Moore-Penrose inverse of a symmetric PSD matrix with a known number of
/// null directions, from its full eigendecomposition.
pub fn pseudo_inverse(k: &DMatrix<f64>, null_dim: usize) -> DMatrix<f64> {
    let n = k.nrows();
    let eig = SymmetricEigen::new(k.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut out = DMatrix::zeros(n, n);
    for &i in order.iter().skip(null_dim) {
        let v = eig.eigenvectors.column(i);
        out += (v * v.transpose()) / eig.eigenvalues[i];
    }
    out
}

/// Geometric mean of the diagonal of the pseudo-inverse.
pub fn geometric_mean_marginal_variance(k: &DMatrix<f64>, null_dim: usize) -> f64 {
    let pinv = pseudo_inverse(k, null_dim);
    let n = k.nrows() as f64;
    ((0..k.nrows()).map(|i| pinv[(i, i)].ln()).sum::<f64>() / n).exp()
}

/// Two-sided Kolmogorov-Smirnov statistic against an analytic CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}
