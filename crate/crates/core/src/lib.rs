//! Stochastic profiling: simulation and maximum-likelihood deconvolution of
//! pooled gene-expression measurements under lognormal/exponential mixture
//! models.
//!
//! A pooled measurement is the summed expression of `n` cells, each drawn
//! from one of `T` latent populations. The library evaluates the exact
//! mixture-over-compositions density of such pools, fits the single-cell
//! parameters by multi-start derivative-free optimization, selects models
//! by BIC, and predicts per-pool compositions.

pub mod analysis;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod io;
pub mod likelihood;
pub mod numeric;
pub mod param_space;
pub mod pool_model;
pub mod quadrature;
pub mod rng;
pub mod simstudy;

pub use distributions::{ErlangParams, ExponentialParams, LogNormalParams};
pub use error::{Error, Result};
pub use estimation::{FitResult, OptimizerConfig};
pub use likelihood::Dataset;
pub use param_space::TransformedParameters;
pub use pool_model::{Composition, Family, ModelSpec, ParameterSet, PoolSizeVector};
