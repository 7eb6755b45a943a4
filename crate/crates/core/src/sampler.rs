//! Gibbs-within-Metropolis sampler for the CAR model.
//!
//! Each iteration makes a systematic scan over the parameter blocks:
//!
//! * `beta` — exact draw from its Gaussian full conditional
//!   `N(V X' Q y, V)`, `V = (X' Q X + D^-1)^-1`, `D = diag(prior variances)`;
//! * `tau` — random-walk Metropolis on `log tau` against the half-t (or
//!   inverse-gamma-on-tau^2) prior, full conditional
//!   `prior(tau) tau^-n exp(-S / (2 tau^2))` with `S = r' (I - rho C) r`;
//! * `rho` — random-walk Metropolis on the spectral interval, target
//!   `|I - rho C|^(1/2) exp(-r' (I - rho C) r / (2 tau^2))`, log-determinant
//!   via Cholesky, out-of-interval proposals rejected;
//! * latent `Y` (measurement-error variant) — exact draw from
//!   `N(L^-1 (Q mu + z / sigma^2), L^-1)`, `L = Q + I / sigma^2`.
//!
//! Proposal scales adapt only during burn-in (toward 30-45% acceptance) and
//! are frozen afterward, so the retained draws target the exact posterior.
//! All randomness comes from a ChaCha20 stream seeded from
//! `(config.seed, chain index)`: identical inputs give bit-identical draws.
//!
//! The half-t prior is truncated to `config.tau_range` (default
//! `(1e-6, 1e6)`, far outside any realistic posterior mass). This keeps the
//! tau conditional proper even in degenerate corners such as an exact-fit
//! dataset, where the untruncated conditional `prior(tau) tau^-n` is not
//! integrable at 0.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{fitted_values, AreaDataset, CarParams, NeighborGraph};

/// Prior on the CAR conditional scale `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauPrior {
    /// Half-Student-t on `tau > 0` with the given degrees of freedom and
    /// density scale. The conventional default reads the stated squared
    /// scale 10 as `scale = sqrt(10)`; see [`PriorSpec::default`].
    HalfT { df: f64, scale: f64 },
    /// Inverse-gamma(shape, rate) on `tau^2`, conjugate to the CAR
    /// likelihood. Mainly a test configuration: it gives the tau update a
    /// closed-form stationary law to check against.
    InvGammaTauSq { shape: f64, rate: f64 },
}

impl TauPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TauPrior::HalfT { df, scale } => {
                df >= 1.0 && df.is_finite() && scale > 0.0 && scale.is_finite()
            }
            TauPrior::InvGammaTauSq { shape, rate } => {
                shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad tau prior {self:?}")))
        }
    }

    /// Log prior density of `tau`, up to an additive constant (Metropolis
    /// ratios and grid normalizations cancel constants). The inverse-gamma
    /// variant includes the `2 tau` Jacobian of the `tau^2 -> tau` change of
    /// variables.
    pub fn log_density_unnorm(&self, tau: f64) -> f64 {
        match *self {
            TauPrior::HalfT { df, scale } => {
                let t = tau / scale;
                -0.5 * (df + 1.0) * (t * t / df).ln_1p()
            }
            TauPrior::InvGammaTauSq { shape, rate } => {
                -(2.0 * shape + 1.0) * tau.ln() - rate / (tau * tau)
            }
        }
    }
}

/// Prior block: independent zero-mean Gaussians on the regression
/// coefficients, the tau prior above, and (implicitly) a uniform prior on
/// `rho` over the graph's spectral interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Intercept prior variance (default 5).
    pub sigma2_beta0: f64,
    /// Slope prior variance, shared across covariates (default 5).
    pub sigma2_betaj: f64,
    pub tau_prior: TauPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            sigma2_beta0: 5.0,
            sigma2_betaj: 5.0,
            tau_prior: TauPrior::HalfT {
                df: 15.0,
                scale: 10f64.sqrt(),
            },
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_beta0.is_finite() && self.sigma2_beta0 > 0.0)
            || !(self.sigma2_betaj.is_finite() && self.sigma2_betaj > 0.0)
        {
            return Err(Error::InvalidParameter(
                "prior variances must be positive and finite".into(),
            ));
        }
        self.tau_prior.validate()
    }

    fn beta_prior_variances(&self, p: usize) -> DVector<f64> {
        let mut v = DVector::from_element(p + 1, self.sigma2_betaj);
        v[0] = self.sigma2_beta0;
        v
    }
}

/// Chain length, seeding and proposal controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Random-walk scale for rho proposals.
    pub rho_step: f64,
    /// Random-walk scale for log-tau proposals.
    pub log_tau_step: f64,
    /// Adapt proposal scales during burn-in toward 30-45% acceptance.
    pub adapt: bool,
    /// Support truncation for the tau prior (open interval).
    pub tau_range: (f64, f64),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            total_iters: 15_000,
            burn_in: 5_000,
            thin: 1,
            seed: 1,
            rho_step: 0.1,
            log_tau_step: 0.3,
            adapt: true,
            tau_range: (1e-6, 1e6),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_iters {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be smaller than total_iters ({})",
                self.burn_in, self.total_iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be >= 1".into()));
        }
        if self.retained() < 100 {
            return Err(Error::InvalidParameter(format!(
                "(total_iters - burn_in)/thin must retain at least 100 draws, retains {}",
                self.retained()
            )));
        }
        if !(self.rho_step.is_finite() && self.rho_step > 0.0)
            || !(self.log_tau_step.is_finite() && self.log_tau_step > 0.0)
        {
            return Err(Error::InvalidParameter(
                "proposal step sizes must be positive and finite".into(),
            ));
        }
        let (lo, hi) = self.tau_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "tau_range must satisfy 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// Number of retained draws M.
    pub fn retained(&self) -> usize {
        let span = self.total_iters - self.burn_in;
        span.div_ceil(self.thin)
    }
}

/// M fitted-value draws for each region, the interchange object between
/// the sampler and everything downstream. Stored region-major so a
/// region's draw vector is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedDraws {
    region_ids: Vec<String>,
    m: usize,
    values: Vec<f64>,
}

impl FittedDraws {
    /// `values[region * m + draw]`.
    pub fn new(region_ids: Vec<String>, m: usize, values: Vec<f64>) -> Result<Self> {
        if region_ids.is_empty() || m == 0 {
            return Err(Error::InvalidInput(
                "fitted draws need at least one region and one draw".into(),
            ));
        }
        if values.len() != region_ids.len() * m {
            return Err(Error::InvalidInput(format!(
                "fitted draws have {} values for {} regions x {} draws",
                values.len(),
                region_ids.len(),
                m
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("fitted draws must be finite".into()));
        }
        Ok(FittedDraws {
            region_ids,
            m,
            values,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn num_draws(&self) -> usize {
        self.m
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    /// All M draws for one region.
    pub fn region_draws(&self, region: usize) -> &[f64] {
        &self.values[region * self.m..(region + 1) * self.m]
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.region_ids.iter().position(|r| r == id)
    }
}

/// Per-parameter chain summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub split_rhat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRates {
    pub rho: f64,
    pub tau: f64,
}

/// Everything a chain produces: retained parameter draws, the fitted-value
/// matrix, post-burn-in acceptance rates, and per-parameter diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub params: Vec<CarParams>,
    pub fitted: FittedDraws,
    pub acceptance: AcceptanceRates,
    pub diagnostics: Vec<ParamDiagnostics>,
}

/// Current parameter state of one chain. Fields are public so conditional
/// updates can be driven directly in validity tests.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub beta: DVector<f64>,
    pub rho: f64,
    pub tau: f64,
    /// Latent process values; aliases z in the no-measurement-error variant.
    pub y: DVector<f64>,
}

impl GibbsState {
    /// Initialize at the least-squares fit: `beta` from an SVD solve,
    /// `rho = 0`, `tau` at the residual standard deviation (clamped inside
    /// `tau_range`), latent y at z.
    pub fn init(dataset: &AreaDataset, config: &SamplerConfig) -> Result<Self> {
        let x = dataset.design();
        let z = dataset.z();
        let svd = x.clone().svd(true, true);
        let beta = svd
            .solve(z, 1e-12)
            .map_err(|e| Error::Numerical(format!("least-squares initialization failed: {e}")))?;
        let resid = z - x * &beta;
        let resid_sd = math::sample_sd(resid.as_slice());
        let (lo, hi) = config.tau_range;
        let mut tau = resid_sd.max(1e-3);
        if tau <= lo || tau >= hi {
            tau = (lo * hi).sqrt();
        }
        Ok(GibbsState {
            beta,
            rho: 0.0,
            tau,
            y: z.clone(),
        })
    }
}

/// Immutable inputs shared by the conditional updates.
pub struct ChainContext<'a> {
    pub dataset: &'a AreaDataset,
    pub graph: &'a NeighborGraph,
    pub priors: &'a PriorSpec,
    pub tau_range: (f64, f64),
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draw from `N(mean, P^-1)` given the Cholesky factor of the precision P:
/// `mean + L^-T z`.
fn sample_with_precision_chol<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let k = mean.len();
    let z = DVector::from_fn(k, |_, _| std_normal(rng));
    let shift = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .expect("triangular solve after successful factorization");
    mean + shift
}

/// Mean and precision Cholesky of the Gaussian full conditional of beta:
/// precision `X' Q X + D^-1`, mean `(X' Q X + D^-1)^-1 X' Q y`.
pub fn beta_conditional(
    x: &DMatrix<f64>,
    q: &DMatrix<f64>,
    y: &DVector<f64>,
    prior_var: &DVector<f64>,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let xtq = x.transpose() * q;
    let mut prec = &xtq * x;
    for k in 0..prec.nrows() {
        prec[(k, k)] += 1.0 / prior_var[k];
    }
    let chol = prec.cholesky().ok_or_else(|| {
        Error::Numerical("singular beta full-conditional precision (collinear design?)".into())
    })?;
    let mean = chol.solve(&(xtq * y));
    Ok((mean, chol))
}

/// Mean and precision Cholesky of the latent-Y conditional:
/// `Lambda = Q + I/sigma^2`, mean `Lambda^-1 (Q mu + z/sigma^2)`.
pub fn latent_conditional(
    q: &DMatrix<f64>,
    mu: &DVector<f64>,
    z: &DVector<f64>,
    sigma2: f64,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let mut lambda = q.clone();
    for i in 0..lambda.nrows() {
        lambda[(i, i)] += 1.0 / sigma2;
    }
    let chol = lambda
        .cholesky()
        .ok_or_else(|| Error::Numerical("latent-Y conditional failed to factorize".into()))?;
    let mean = chol.solve(&(q * mu + z / sigma2));
    Ok((mean, chol))
}

fn i_minus_rho_c(graph: &NeighborGraph, rho: f64) -> DMatrix<f64> {
    let n = graph.n();
    let mut b = DMatrix::identity(n, n);
    b -= rho * graph.adjacency();
    b
}

/// `log |I - rho C|` via Cholesky; `None` when the matrix is not positive
/// definite (numerically possible at the very edge of the interval).
pub fn log_det_i_minus_rho_c(graph: &NeighborGraph, rho: f64) -> Option<f64> {
    let chol = i_minus_rho_c(graph, rho).cholesky()?;
    Some(
        2.0 * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>(),
    )
}

/// Log target of the rho conditional up to a constant:
/// `0.5 log|I - rho C| - r'(I - rho C)r / (2 tau^2)` inside the bounds.
pub fn rho_log_kernel(
    graph: &NeighborGraph,
    resid: &DVector<f64>,
    tau: f64,
    rho: f64,
) -> Option<f64> {
    let ld = log_det_i_minus_rho_c(graph, rho)?;
    let s = resid.dot(resid) - rho * resid.dot(&(graph.adjacency() * resid));
    Some(0.5 * ld - s / (2.0 * tau * tau))
}

/// Log target of the tau conditional on the log scale, up to a constant:
/// `log prior(tau) - n log tau - s/(2 tau^2) + log tau` (the trailing term
/// is the Jacobian of the log transform).
pub fn tau_log_kernel(prior: &TauPrior, n: usize, s: f64, tau: f64) -> f64 {
    prior.log_density_unnorm(tau) - (n as f64) * tau.ln() - s / (2.0 * tau * tau) + tau.ln()
}

/// Exact conjugate update of beta.
pub fn sample_beta<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &ChainContext,
    rng: &mut R,
) -> Result<()> {
    let b = i_minus_rho_c(ctx.graph, state.rho);
    let q = b / (state.tau * state.tau);
    let prior_var = ctx.priors.beta_prior_variances(ctx.dataset.p());
    let (mean, chol) = beta_conditional(ctx.dataset.design(), &q, &state.y, &prior_var)?;
    state.beta = sample_with_precision_chol(&mean, &chol, rng);
    Ok(())
}

/// Random-walk Metropolis update of rho; returns whether the proposal was
/// accepted. Out-of-interval proposals are rejected outright.
pub fn sample_rho<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &ChainContext,
    rho_step: f64,
    rng: &mut R,
) -> Result<bool> {
    let proposal = state.rho + rho_step * std_normal(rng);
    let u: f64 = rng.random();
    let (lo, hi) = ctx.graph.rho_bounds();
    if !(proposal > lo && proposal < hi) {
        return Ok(false);
    }
    let resid = &state.y - ctx.dataset.design() * &state.beta;
    let current = rho_log_kernel(ctx.graph, &resid, state.tau, state.rho).ok_or_else(|| {
        Error::Numerical(format!(
            "log-determinant failed at current rho = {}",
            state.rho
        ))
    })?;
    let proposed = match rho_log_kernel(ctx.graph, &resid, state.tau, proposal) {
        Some(v) => v,
        // PD failure at the float edge of the interval: the target is 0 there
        None => return Ok(false),
    };
    if u.ln() < proposed - current {
        state.rho = proposal;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Random-walk Metropolis update of log tau; returns whether the proposal
/// was accepted. Proposals outside `ctx.tau_range` are rejected (the prior
/// is truncated to that interval).
pub fn sample_tau<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &ChainContext,
    log_tau_step: f64,
    rng: &mut R,
) -> Result<bool> {
    let proposal = (state.tau.ln() + log_tau_step * std_normal(rng)).exp();
    let u: f64 = rng.random();
    let (lo, hi) = ctx.tau_range;
    if !(proposal > lo && proposal < hi) {
        return Ok(false);
    }
    let resid = &state.y - ctx.dataset.design() * &state.beta;
    let s = resid.dot(&resid) - state.rho * resid.dot(&(ctx.graph.adjacency() * &resid));
    let n = ctx.dataset.n();
    let current = tau_log_kernel(&ctx.priors.tau_prior, n, s, state.tau);
    let proposed = tau_log_kernel(&ctx.priors.tau_prior, n, s, proposal);
    if u.ln() < proposed - current {
        state.tau = proposal;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Exact Gaussian update of the latent process values (measurement-error
/// variant only).
pub fn sample_latent_y<R: Rng + ?Sized>(
    state: &mut GibbsState,
    ctx: &ChainContext,
    rng: &mut R,
) -> Result<()> {
    let sigma2 = ctx.dataset.sigma2_meas().ok_or_else(|| {
        Error::InvalidParameter("latent-Y update needs a measurement-error variance".into())
    })?;
    let b = i_minus_rho_c(ctx.graph, state.rho);
    let q = b / (state.tau * state.tau);
    let mu = ctx.dataset.design() * &state.beta;
    let (mean, chol) = latent_conditional(&q, &mu, ctx.dataset.z(), sigma2)?;
    state.y = sample_with_precision_chol(&mean, &chol, rng);
    Ok(())
}

struct AdaptiveStep {
    step: f64,
    proposals: usize,
    accepts: usize,
}

impl AdaptiveStep {
    const WINDOW: usize = 50;

    fn new(step: f64) -> Self {
        AdaptiveStep {
            step,
            proposals: 0,
            accepts: 0,
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposals += 1;
        self.accepts += usize::from(accepted);
        if self.proposals == Self::WINDOW {
            let rate = self.accepts as f64 / self.proposals as f64;
            if rate > 0.45 {
                self.step *= 1.1;
            } else if rate < 0.30 {
                self.step /= 1.1;
            }
            self.step = self.step.clamp(1e-8, 1e4);
            self.proposals = 0;
            self.accepts = 0;
        }
    }
}

/// Run one chain (RNG stream 0). See [`run_chains`] for multiple chains.
pub fn run_chain(
    dataset: &AreaDataset,
    graph: &NeighborGraph,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    run_chain_indexed(dataset, graph, priors, config, 0)
}

/// Run several chains with independent RNG streams derived from
/// `(config.seed, chain index)`; results are ordered by chain index.
pub fn run_chains(
    dataset: &AreaDataset,
    graph: &NeighborGraph,
    priors: &PriorSpec,
    config: &SamplerConfig,
    n_chains: usize,
) -> Result<Vec<PosteriorDraws>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|idx| {
                scope.spawn(move || run_chain_indexed(dataset, graph, priors, config, idx as u64))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

fn run_chain_indexed(
    dataset: &AreaDataset,
    graph: &NeighborGraph,
    priors: &PriorSpec,
    config: &SamplerConfig,
    chain_index: u64,
) -> Result<PosteriorDraws> {
    priors.validate()?;
    config.validate()?;
    if graph.n() != dataset.n() {
        return Err(Error::InvalidInput(format!(
            "graph has {} regions, dataset has {}",
            graph.n(),
            dataset.n()
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_index);

    let ctx = ChainContext {
        dataset,
        graph,
        priors,
        tau_range: config.tau_range,
    };
    let mut state = GibbsState::init(dataset, config)?;
    let has_latent = dataset.sigma2_meas().is_some();

    let m = config.retained();
    let n = dataset.n();
    let p = dataset.p();
    let mut params: Vec<CarParams> = Vec::with_capacity(m);
    // region-major fitted storage, values[region * m + draw]
    let mut fitted_values_buf = vec![0.0f64; n * m];

    let mut rho_adapt = AdaptiveStep::new(config.rho_step);
    let mut tau_adapt = AdaptiveStep::new(config.log_tau_step);
    let mut post_rho = (0usize, 0usize); // (accepts, proposals)
    let mut post_tau = (0usize, 0usize);

    let annotate = |e: Error, iter: usize| match e {
        Error::Numerical(msg) => Error::Numerical(format!("iteration {iter}: {msg}")),
        other => other,
    };

    let mut draw_idx = 0usize;
    for iter in 0..config.total_iters {
        sample_beta(&mut state, &ctx, &mut rng).map_err(|e| annotate(e, iter))?;
        let acc_tau = sample_tau(&mut state, &ctx, tau_adapt.step, &mut rng)
            .map_err(|e| annotate(e, iter))?;
        let acc_rho = sample_rho(&mut state, &ctx, rho_adapt.step, &mut rng)
            .map_err(|e| annotate(e, iter))?;
        if has_latent {
            sample_latent_y(&mut state, &ctx, &mut rng).map_err(|e| annotate(e, iter))?;
        }

        if iter < config.burn_in {
            if config.adapt {
                tau_adapt.record(acc_tau);
                rho_adapt.record(acc_rho);
            }
        } else {
            post_tau.1 += 1;
            post_tau.0 += usize::from(acc_tau);
            post_rho.1 += 1;
            post_rho.0 += usize::from(acc_rho);
            if (iter - config.burn_in).is_multiple_of(config.thin) {
                let current = CarParams {
                    beta: state.beta.clone(),
                    rho: state.rho,
                    tau: state.tau,
                };
                let fitted = if has_latent {
                    state.y.clone()
                } else {
                    fitted_values(dataset, graph, &current).map_err(|e| annotate(e, iter))?
                };
                for region in 0..n {
                    fitted_values_buf[region * m + draw_idx] = fitted[region];
                }
                params.push(current);
                draw_idx += 1;
            }
        }
    }
    debug_assert_eq!(draw_idx, m);

    // every retained draw must satisfy the parameter invariants
    for (j, par) in params.iter().enumerate() {
        par.validate(graph)
            .map_err(|e| Error::Numerical(format!("retained draw {j} violates invariants: {e}")))?;
    }

    let fitted = FittedDraws::new(dataset.region_ids().to_vec(), m, fitted_values_buf)?;

    let mut diagnostics = Vec::with_capacity(p + 3);
    for k in 0..=p {
        let series: Vec<f64> = params.iter().map(|par| par.beta[k]).collect();
        diagnostics.push(diagnose(format!("beta{k}"), &series));
    }
    let rho_series: Vec<f64> = params.iter().map(|par| par.rho).collect();
    diagnostics.push(diagnose("rho".into(), &rho_series));
    let tau_series: Vec<f64> = params.iter().map(|par| par.tau).collect();
    diagnostics.push(diagnose("tau".into(), &tau_series));

    Ok(PosteriorDraws {
        params,
        fitted,
        acceptance: AcceptanceRates {
            rho: post_rho.0 as f64 / post_rho.1.max(1) as f64,
            tau: post_tau.0 as f64 / post_tau.1.max(1) as f64,
        },
        diagnostics,
    })
}

fn diagnose(name: String, series: &[f64]) -> ParamDiagnostics {
    ParamDiagnostics {
        name,
        mean: math::mean(series),
        sd: math::sample_sd(series),
        ess: effective_sample_size(series),
        split_rhat: split_rhat(series),
    }
}

/// Effective sample size via the initial-positive-sequence rule: sum
/// autocorrelations in consecutive pairs until a pair sum goes
/// nonpositive.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let m = math::mean(series);
    let c0: f64 = series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        // constant chain: autocorrelation undefined, call it independent
        return n as f64;
    }
    let autocov = |t: usize| -> f64 {
        series[..n - t]
            .iter()
            .zip(&series[t..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / n as f64
    };
    let mut iat = 1.0;
    let mut t = 1;
    while t + 1 < n {
        let pair = (autocov(t) + autocov(t + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        iat += 2.0 * pair;
        t += 2;
    }
    n as f64 / iat
}

/// Split-half potential scale reduction of a single chain.
pub fn split_rhat(series: &[f64]) -> f64 {
    let half = series.len() / 2;
    split_rhat_multi(&[&series[..half], &series[series.len() - half..]])
}

/// Potential scale reduction over several chains, each split into halves.
pub fn split_rhat_multi(chains: &[&[f64]]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    let len = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if len < 2 {
        return f64::NAN;
    }
    for c in chains {
        halves.push(&c[..len]);
        halves.push(&c[c.len() - len..]);
    }
    let means: Vec<f64> = halves.iter().map(|h| math::mean(h)).collect();
    let vars: Vec<f64> = halves
        .iter()
        .map(|h| {
            let mu = math::mean(h);
            h.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (len - 1) as f64
        })
        .collect();
    let w = math::mean(&vars);
    let grand = math::mean(&means);
    let b_over_l = means
        .iter()
        .map(|mu| (mu - grand) * (mu - grand))
        .sum::<f64>()
        / (means.len() - 1) as f64;
    if w <= 1e-300 {
        return if b_over_l <= 1e-300 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    let var_plus = (len - 1) as f64 / len as f64 * w + b_over_l;
    (var_plus / w).sqrt()
}
