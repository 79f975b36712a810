//! Numerical stochastic calculus via regularization on sampled càdlàg paths.
//!
//! The crate is organised bottom-up:
//!
//! * [`paths`] stores trajectories on a uniform grid together with an explicit
//!   jump registry, and evaluates star-integrals against the jump measure.
//! * [`simulate`] produces seeded ensembles of Brownian, fractional Brownian,
//!   compound Poisson, jump-diffusion and composite processes.
//! * [`regularize`] implements the ε-covariation and forward-integral
//!   estimators together with the continuous/jump split of the bracket.
//! * [`characteristics`] holds truncation functions, the characteristics
//!   triplet of each model and the path decomposition built from it.
//! * [`itoverify`] assembles martingale-problem residuals and tests them on
//!   Monte Carlo ensembles.
//! * [`levyexponent`] evaluates Lévy–Khintchine type exponents with signed
//!   measures and recovers the triplet back from a sampled exponent.

pub mod characteristics;
pub mod error;
pub mod itoverify;
pub mod levyexponent;
pub mod paths;
pub mod quadrature;
pub mod regularize;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
