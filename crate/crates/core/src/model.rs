//! Area-level data hierarchy and CAR covariance algebra.
//!
//! The joint law of the latent process over `n` regions is
//!
//! ```text
//! Y ~ N(X beta, tau^2 (I - rho C)^-1)
//! ```
//!
//! where `C` is a binary symmetric adjacency matrix with zero diagonal.
//! `(I - rho C)` is positive definite exactly when `rho` lies in the open
//! spectral interval `(1/e_min, 1/e_max)` of `C`'s extreme eigenvalues;
//! [`NeighborGraph`] computes that interval (intersected with `(-1, 1)`)
//! at construction and every parameter check uses it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Observed data over the regions: labels, observed values `z`, design
/// matrix with leading intercept column, and (optionally) a known
/// measurement-error variance. When `sigma2_meas` is absent the observed
/// values are the process values; when present, `Z = Y + eps` with
/// `eps ~ N(0, sigma2 I)` and the sampler treats `Y` as latent.
#[derive(Debug, Clone)]
pub struct AreaDataset {
    region_ids: Vec<String>,
    covariate_names: Vec<String>,
    z: DVector<f64>,
    x: DMatrix<f64>,
    sigma2_meas: Option<f64>,
}

impl AreaDataset {
    /// Build and validate a dataset. `x` must be `n x (p+1)` with an
    /// all-ones leading intercept column; `covariate_names` labels the
    /// remaining `p` columns.
    pub fn new(
        region_ids: Vec<String>,
        covariate_names: Vec<String>,
        z: DVector<f64>,
        x: DMatrix<f64>,
        sigma2_meas: Option<f64>,
    ) -> Result<Self> {
        let n = region_ids.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 regions, got {n}"
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &region_ids {
            if id.is_empty() {
                return Err(Error::InvalidInput("empty region id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate region id '{id}'")));
            }
        }
        if z.len() != n {
            return Err(Error::InvalidInput(format!(
                "z has {} entries for {} regions",
                z.len(),
                n
            )));
        }
        if x.nrows() != n || x.ncols() != covariate_names.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "design matrix is {}x{}, expected {}x{}",
                x.nrows(),
                x.ncols(),
                n,
                covariate_names.len() + 1
            )));
        }
        for i in 0..n {
            if x[(i, 0)] != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "intercept column must be identically 1 (region '{}')",
                    region_ids[i]
                )));
            }
        }
        if z.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "z and covariates must be finite (no missing entries)".into(),
            ));
        }
        if let Some(s2) = sigma2_meas {
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "measurement variance must be positive and finite, got {s2}"
                )));
            }
        }
        Ok(AreaDataset {
            region_ids,
            covariate_names,
            z,
            x,
            sigma2_meas,
        })
    }

    pub fn n(&self) -> usize {
        self.region_ids.len()
    }

    /// Number of covariates (excluding the intercept).
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// Design matrix including the intercept column.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn sigma2_meas(&self) -> Option<f64> {
        self.sigma2_meas
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.region_ids.iter().position(|r| r == id)
    }
}

/// First-order neighbor structure: the binary adjacency matrix plus the
/// open interval of `rho` values for which `I - rho C` stays positive
/// definite.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    c: DMatrix<f64>,
    rho_bounds: (f64, f64),
}

impl NeighborGraph {
    /// Build from an undirected edge list over region indices `0..n`.
    /// Duplicate edges collapse; self-loops and isolated regions are
    /// rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({a},{b}) references a region index >= {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "self-loop on region index {a}; the adjacency diagonal must be zero"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let graph = Self::assemble(n, normalized);
        for i in 0..n {
            if graph.degree(i) == 0 {
                return Err(Error::InvalidInput(format!(
                    "region index {i} has no neighbors; isolated regions are not supported"
                )));
            }
        }
        Ok(graph)
    }

    /// Test-only constructor that skips the isolation check (a zero
    /// adjacency matrix is useful for degenerate-likelihood tests).
    #[doc(hidden)]
    pub fn new_unchecked(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut normalized: Vec<(usize, usize)> =
            edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        normalized.sort_unstable();
        normalized.dedup();
        Self::assemble(n, normalized)
    }

    fn assemble(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut c = DMatrix::zeros(n, n);
        for &(a, b) in &edges {
            c[(a, b)] = 1.0;
            c[(b, a)] = 1.0;
        }
        let eig = SymmetricEigen::new(c.clone());
        let (mut e_min, mut e_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &e in eig.eigenvalues.iter() {
            e_min = e_min.min(e);
            e_max = e_max.max(e);
        }
        // (I - rho C) > 0  <=>  rho e < 1 for every eigenvalue e of C.
        let lower = if e_min < -1e-12 {
            1.0 / e_min
        } else {
            f64::NEG_INFINITY
        };
        let upper = if e_max > 1e-12 {
            1.0 / e_max
        } else {
            f64::INFINITY
        };
        let rho_bounds = (lower.max(-1.0), upper.min(1.0));
        NeighborGraph {
            n,
            edges,
            c,
            rho_bounds,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Binary adjacency matrix C.
    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Open interval of valid autocorrelation values: the spectral interval
    /// `(1/e_min, 1/e_max)` intersected with `(-1, 1)`.
    pub fn rho_bounds(&self) -> (f64, f64) {
        self.rho_bounds
    }

    pub fn contains_rho(&self, rho: f64) -> bool {
        rho.is_finite() && rho > self.rho_bounds.0 && rho < self.rho_bounds.1
    }

    pub fn degree(&self, i: usize) -> usize {
        self.c.row(i).iter().filter(|&&v| v != 0.0).count()
    }
}

/// CAR parameter state: regression coefficients, spatial autocorrelation,
/// and conditional scale (the process covariance is `tau^2 (I - rho C)^-1`).
#[derive(Debug, Clone)]
pub struct CarParams {
    pub beta: DVector<f64>,
    pub rho: f64,
    pub tau: f64,
}

impl CarParams {
    pub fn validate(&self, graph: &NeighborGraph) -> Result<()> {
        if self.beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        if !graph.contains_rho(self.rho) {
            let (lo, hi) = graph.rho_bounds();
            return Err(Error::InvalidParameter(format!(
                "rho = {} outside the valid open interval ({lo}, {hi})",
                self.rho
            )));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Precision matrix `Q = (I - rho C)/tau^2` of the CAR law, verified
/// positive definite by a Cholesky factorization.
pub fn build_precision(graph: &NeighborGraph, params: &CarParams) -> Result<DMatrix<f64>> {
    params.validate(graph)?;
    let n = graph.n();
    let tau2 = params.tau * params.tau;
    let mut q = DMatrix::identity(n, n);
    q -= params.rho * graph.adjacency();
    q /= tau2;
    if q.clone().cholesky().is_none() {
        return Err(Error::Numerical(format!(
            "precision matrix failed to factorize at rho = {}, tau = {}",
            params.rho, params.tau
        )));
    }
    Ok(q)
}

/// Regression mean `mu = X beta`.
pub fn mean_vector(dataset: &AreaDataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != dataset.p() + 1 {
        return Err(Error::InvalidInput(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            dataset.p() + 1
        )));
    }
    Ok(dataset.design() * beta)
}

/// Conditional fitted values `mu_i + phi_i` with spatial trend
/// `phi_i = rho sum_j c_ij (z_j - mu_j)` (no-measurement-error variant:
/// the observed z plays the role of the process values).
pub fn fitted_values(
    dataset: &AreaDataset,
    graph: &NeighborGraph,
    params: &CarParams,
) -> Result<DVector<f64>> {
    if graph.n() != dataset.n() {
        return Err(Error::InvalidInput(format!(
            "graph has {} regions, dataset has {}",
            graph.n(),
            dataset.n()
        )));
    }
    params.validate(graph)?;
    let mu = mean_vector(dataset, &params.beta)?;
    let resid = dataset.z() - &mu;
    Ok(&mu + params.rho * (graph.adjacency() * resid))
}
