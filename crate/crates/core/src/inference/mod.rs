//! Exact-Gaussian grid posterior for the toy varying-coefficient model
//!
//! ```text
//! y_t = alpha + (beta0 + beta_t) x_t + eps_t,   eps_t ~ N(0, sigma^2)
//! ```
//!
//! with `beta ~ N(0, Sigma(xi) / tau)`. Given the hyperparameters `xi` the
//! model is jointly Gaussian, so the evidence and the conditional moments of
//! `(alpha, beta0, beta)` are exact; the hyperparameters are integrated on a
//! grid laid out on the distance scale.

mod evidence;
mod grid;
mod simulate;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use evidence::{
    conditional_summary, conditional_summary_with, log_marginal_likelihood, log_marginal_likelihood_with, CellSummary, EvidenceMethod,
};
pub use grid::{
    fit_grid, normalize_log_weights, AxisSummary, Grid, GridAxis, GridCell, GridPosterior, GridSpec,
    MAX_OUTSIDE_MASS,
};
pub use simulate::{
    compare_priors, compare_priors_with, simulate_scenario, simulate_with_truth, Aggregate, CompareOptions, CompareReport,
    ComparisonPrior, PriorReport, ReplicationSummary, Scenario, ScenarioKind,
};

use crate::error::{domain, Error, Result};
use crate::gmrf::AdjacencyGraph;
use crate::pcpriors::{Ar1ReferencePrior, PcPrior, ScalarPrior, UniformCorrPrior};

/// Observations ordered by the effect modifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VcmDataset {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `(lat, lon)` per row, needed by the Matérn family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<[f64; 2]>>,
    pub noise_sd: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
}

impl VcmDataset {
    pub fn new(t: Vec<f64>, x: Vec<f64>, y: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let n = y.len();
        if x.len() != n {
            return Err(Error::Dimension { expected: n, got: x.len() });
        }
        if t.len() != n {
            return Err(Error::Dimension { expected: n, got: t.len() });
        }
        if n < 2 {
            return Err(domain(format!("dataset needs at least 2 rows, got {n}")));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(domain(format!("noise sd must be positive, got {noise_sd}")));
        }
        if t.iter().chain(&x).chain(&y).any(|v| !v.is_finite()) {
            return Err(domain("dataset contains non-finite values"));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Err(domain("covariate x is identically zero"));
        }
        Ok(Self { t, x, y, coords: None, noise_sd })
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: coords.len() });
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain("coordinates contain non-finite values"));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(domain(format!("noise sd must be positive, got {noise_sd}")));
        }
        self.noise_sd = noise_sd;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Reads `t,x,y` (optionally `lat,lon`) CSV with a header row.
    pub fn read_csv<R: Read>(reader: R, noise_sd: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for col in ["t", "x", "y"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Parse(format!("missing column '{col}' (expected header t,x,y)")));
            }
        }
        let (mut t, mut x, mut y, mut coords) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            t.push(row.t);
            x.push(row.x);
            y.push(row.y);
            match (row.lat, row.lon) {
                (Some(a), Some(b)) => coords.push([a, b]),
                (None, None) => {}
                _ => return Err(Error::Parse(format!("row {}: lat and lon must be given together", i + 1))),
            }
        }
        if y.is_empty() {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        if !coords.is_empty() && coords.len() != y.len() {
            return Err(Error::Parse("lat/lon present on some rows only".into()));
        }
        let data = Self::new(t, x, y, noise_sd)?;
        if coords.is_empty() {
            Ok(data)
        } else {
            data.with_coords(coords)
        }
    }

    pub fn read_csv_path(path: impl AsRef<Path>, noise_sd: f64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, noise_sd)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.n() {
            let (lat, lon) = match &self.coords {
                Some(c) => (Some(c[i][0]), Some(c[i][1])),
                None => (None, None),
            };
            w.serialize(Row { t: self.t[i], x: self.x[i], y: self.y[i], lat, lon })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Model for the varying part `beta`.
#[derive(Debug, Clone, PartialEq)]
pub enum VcmFamily {
    Exchangeable,
    Ar1,
    Rw1,
    Rw2,
    Icar { graph: AdjacencyGraph },
    Matern { nu: f64 },
}

impl VcmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            VcmFamily::Exchangeable => "exchangeable",
            VcmFamily::Ar1 => "ar1",
            VcmFamily::Rw1 => "rw1",
            VcmFamily::Rw2 => "rw2",
            VcmFamily::Icar { .. } => "icar",
            VcmFamily::Matern { .. } => "matern",
        }
    }

    /// Families with a rank-deficient structure matrix.
    pub fn is_intrinsic(&self) -> bool {
        matches!(self, VcmFamily::Rw1 | VcmFamily::Rw2 | VcmFamily::Icar { .. })
    }

    pub fn is_correlation(&self) -> bool {
        matches!(self, VcmFamily::Exchangeable | VcmFamily::Ar1)
    }
}

/// Prior on the hyperparameters: a PC prior or one of the comparison priors
/// on the AR1 correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPrior {
    Pc(PcPrior),
    Uniform,
    Reference,
}

impl ModelPrior {
    pub fn scalar(&self) -> Option<&dyn ScalarPrior> {
        match self {
            ModelPrior::Pc(p) => p.as_scalar(),
            ModelPrior::Uniform => Some(&UniformCorrPrior),
            ModelPrior::Reference => Some(&Ar1ReferencePrior),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelPrior::Pc(_) => "pc",
            ModelPrior::Uniform => "uniform",
            ModelPrior::Reference => "reference",
        }
    }
}

/// Hyperparameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    /// Exchangeable or AR1 correlation; the precision is the model's fixed `tau`.
    Correlation { rho: f64 },
    Precision { tau: f64 },
    Matern { phi: f64, tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcmModelSpec {
    pub family: VcmFamily,
    pub prior: ModelPrior,
    /// Prior variance of the intercept; large, so close to flat.
    pub alpha_var: f64,
    pub beta0_var: f64,
    /// Fixed precision of `beta` for the correlation families.
    pub tau: f64,
    /// Condition `beta` on `sum(beta) = 0`. Always on for intrinsic families.
    pub sum_to_zero: bool,
}

pub const DEFAULT_ALPHA_VAR: f64 = 1e3;
pub const DEFAULT_BETA0_VAR: f64 = 1.0;

impl VcmModelSpec {
    pub fn new(family: VcmFamily, prior: ModelPrior) -> Result<Self> {
        let sum_to_zero = family.is_intrinsic();
        let spec =
            Self { family, prior, alpha_var: DEFAULT_ALPHA_VAR, beta0_var: DEFAULT_BETA0_VAR, tau: 1.0, sum_to_zero };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_beta0_var(mut self, v: f64) -> Result<Self> {
        self.beta0_var = v;
        self.validate()?;
        Ok(self)
    }

    pub fn with_alpha_var(mut self, v: f64) -> Result<Self> {
        self.alpha_var = v;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    /// Whether the sum-to-zero constraint applies; intrinsic families force it.
    pub fn constrained(&self) -> bool {
        self.sum_to_zero || self.family.is_intrinsic()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha variance", self.alpha_var), ("beta0 variance", self.beta0_var), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        if let VcmFamily::Matern { nu } = self.family {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(domain(format!("Matérn smoothness must be positive, got {nu}")));
            }
        }
        let ok = matches!(
            (&self.family, &self.prior),
            (VcmFamily::Exchangeable, ModelPrior::Pc(PcPrior::ExchCorr(_)))
                | (VcmFamily::Ar1, ModelPrior::Pc(PcPrior::Ar1Corr(_)))
                | (VcmFamily::Ar1, ModelPrior::Uniform | ModelPrior::Reference)
                | (VcmFamily::Rw1 | VcmFamily::Rw2 | VcmFamily::Icar { .. }, ModelPrior::Pc(PcPrior::Gumbel2Precision(_)))
                | (VcmFamily::Matern { .. }, ModelPrior::Pc(PcPrior::MaternJoint(_)))
        );
        if !ok {
            return Err(domain(format!("prior '{}' does not apply to the {} family", self.prior.name(), self.family.name())));
        }
        Ok(())
    }
}
