//! Bayesian deep learning models that couple a perception component (a
//! Bayesian stacked denoising autoencoder or sigmoid belief network) with a
//! task-specific probabilistic model through hinge variables.
//!
//! * [`net`]: MLP/SDAE forward and backward passes
//! * [`cdl`]: collaborative deep learning (MAP), ranking variant, evaluation
//! * [`mcdl`]: marginalized and symmetric CDL with closed-form solves
//! * [`bcdl`]: Bayesian CDL by Metropolis-within-Gibbs
//! * [`rsdae`]: relational SDAE with a graph-Laplacian prior
//! * [`dpfa`]: deep Poisson factor analysis with Gibbs and SGNHT samplers
//! * [`harness`]: experiment configuration, dispatch and artifacts
//!
//! All models are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the double-precision instantiation used by the CLI.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcdl;
pub mod cdl;
pub mod checkpoint;
pub mod corpus;
pub mod dpfa;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mcdl;
pub mod mcmc;
pub mod net;
pub mod rng;
pub mod rsdae;
pub mod scalar;

pub use error::{BdlError, Result};
pub use scalar::Scalar;

pub type NetParams = net::NetParams<f64>;
pub type Hyperparams = net::Hyperparams<f64>;
pub type LatentFactors = cdl::LatentFactors<f64>;
pub type CdlModel = cdl::CdlModel<f64>;
