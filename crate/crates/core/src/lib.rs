//! Generalized-Bayes inference for the personalized minimum clinically
//! important difference (MCID).
//!
//! The MCID for a patient with profile `z` is modelled as `θ(z) = βᵀz`.
//! Instead of the non-smooth 0–1 risk, β gets a generalized posterior
//! built from a deliberately misspecified binary quantile regression (BQR)
//! working likelihood with skewness τ and scale η. The posterior is sampled
//! by a latent-variable Gibbs chain, and η is tuned by bootstrap plus
//! Robbins–Monro so that credible intervals reach their nominal coverage.
//!
//! Module map:
//!
//! * [`dist`]: asymmetric Laplace, GIG, truncated and multivariate normal
//! * [`losses`]: MCID losses, surrogates, BQR loss, population-risk checks
//! * [`gibbs`]: the data-augmented Gibbs sampler
//! * [`gpc`]: coverage calibration of η
//! * [`sim`]: synthetic designs with known MCID
//! * [`harness`]: replicated experiments and CSV/JSON outputs

// `!(x > 0.0)` is how input checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod gpc;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod quadrature;
pub mod rng;
pub mod sim;

pub use data::{Dataset, Datum, Label};
pub use error::{Error, Result};
pub use rng::RngStream;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    mod sampler {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
