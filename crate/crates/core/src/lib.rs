//! Estimation of the full time-varying Negative Binomial distribution of the
//! individual reproduction number from daily, district-level case counts.
//!
//! The crate is organized around the chain from raw surveillance data to
//! distributional estimates and what-if simulations:
//!
//! - [`negbin`]: the generalized Negative Binomial distribution as a
//!   Gamma–Poisson mixture, its moment algebra, binomial thinning closure,
//!   additivity and sampling.
//! - [`panel`]: ingestion and validation of daily case-count files, rolling
//!   weekly sums, moving-average smoothing and district selection for the
//!   goodness-of-fit test.
//! - [`config`]: the epidemiological constants (reporting delay, generation
//!   time, smoothing window, reporting-rate grid) and their file format.
//! - [`estimate`]: the 7-day reproduction-number estimator, the
//!   district-based variance estimator and the moment inversion that yields
//!   the Negative Binomial parameters per assumed reporting rate.
//! - [`bootstrap`]: parametric bootstrap confidence intervals for the mean
//!   reproduction number.
//! - [`gof`]: a probability-generating-function goodness-of-fit test for the
//!   Negative Binomial hypothesis with bootstrap critical values.
//! - [`sim`]: a forward branching-process simulator of cluster-tracing
//!   interventions.

pub mod bootstrap;
pub mod config;
pub mod error;
pub mod estimate;
pub mod gof;
pub mod negbin;
pub mod panel;
pub mod rng;
pub mod sim;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use negbin::{NegBinParams, ThinningRate};
pub use panel::CasePanel;
pub use rng::RngSeed;
