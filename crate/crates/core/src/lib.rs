//! Active model identification and sequential transfer for tabular MDPs.
//!
//! * [`mdp`]: finite MDPs, exact planning, gap and variance statistics.
//! * [`envs`]: grid and objectworld task families, task chains, generative models.
//! * [`ptum`]: identification of a near-optimal policy from approximate candidate models.
//! * [`spectral`]: method-of-moments HMM estimation of candidate models and task dynamics.
//! * [`sequential`]: the per-task loop combining identification and estimation.

pub mod envs;
pub mod error;
pub mod mdp;
pub mod ptum;
pub mod rng;
pub mod sequential;
pub mod spectral;

pub use error::{Error, Result};
