//! Spatial prediction engine for area-level data.
//!
//! The model is a proper conditional autoregression (CAR): observed values
//! `z` over `n` regions with adjacency matrix `C` follow
//!
//! ```text
//! Y ~ N(X beta, tau^2 (I - rho C)^-1),      optionally  Z = Y + eps,  eps ~ N(0, sigma^2 I)
//! ```
//!
//! fit by a Gibbs-within-Metropolis sampler ([`sampler`]). Posterior draws
//! of the fitted surface feed three downstream stages:
//!
//! * [`loss`]: optimal point predictors under squared-error, LINEX and
//!   power-divergence loss, with closed-form posterior functionals;
//! * [`power_ratio`]: the asymmetry diagnostic Psi(lambda) swept over a
//!   grid of loss asymmetry values, with elbow detection;
//! * [`risk`]: relative-risk matrices quantifying the cost of predicting
//!   under the wrong loss.
//!
//! All randomness flows through a seeded ChaCha20 stream, so a fixed seed
//! reproduces every output byte. [`io`] defines the CSV interchange formats
//! and the run manifest.

pub mod error;
pub mod io;
pub mod loss;
mod math;
pub mod model;
pub mod power_ratio;
pub mod risk;
pub mod sampler;

pub use error::{Error, Result};
