//! Asymptotic analysis of the log-determinant statistic
//! I_n(rho) = (1/N) log det(YY* + rho I) for random Gram matrices whose
//! entries carry a variance profile sigma^2_ij.
//!
//! The crate computes, for a given profile and rho > 0:
//!
//! * the deterministic-equivalent vectors t, t~ and the first-order
//!   approximation V_n(rho) of E I_n ([`detequiv`]),
//! * the CLT variance Theta^2_n = -log det(I - A_n) + kappa Tr A_n with
//!   spectral-radius diagnostics ([`fluctuation`]),
//! * the CLT bias B_n(rho) as a semi-infinite integral of beta_n ([`bias`]),
//! * the limiting (n -> infinity) counterparts: tau/tau~ functional
//!   equations, the kernel K_inf and its Fredholm determinant, and the
//!   separable closed form ([`limiting`]),
//! * Monte Carlo validation of all of the above by direct simulation of the
//!   random matrices ([`montecarlo`]).

pub mod bias;
pub mod detequiv;
pub mod error;
pub mod fluctuation;
pub mod linalg;
pub mod montecarlo;
pub mod profile;
pub mod quad;
pub mod limiting;

pub use error::{Error, Result};
pub use profile::{ProfileDescriptor, VarianceProfile};
