//! Bayesian intensity estimation for Poisson point processes with a
//! log-Gaussian prior anchored at a small set of inducing points.
//!
//! The pipeline is: pick inducing points greedily ([`selection`]), sample the
//! posterior over their log-intensities and the kernel hyperparameters
//! ([`mcmc`]), then summarize the posterior anywhere on the domain
//! ([`predict`]).

pub mod conditional;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod mcmc;
pub mod metrics;
mod optim;
pub mod points;
pub mod posterior;
pub mod predict;
pub mod quadrature;
pub mod selection;
pub mod simulate;

pub use conditional::{ConditionalGp, GPValues, InducingSet};
pub use error::{Error, Result};
pub use kernel::{HyperParams, HyperPrior, Kernel};
pub use mcmc::{run_chain, ChainState, PosteriorSamples, SamplerConfig};
pub use metrics::EvalReport;
pub use points::Points;
pub use posterior::PosteriorContext;
pub use predict::IntensityEstimate;
pub use quadrature::Domain;
pub use selection::{select_inducing_points, SelectionConfig, SelectionTrace};
pub use simulate::{EventDataset, Intensity, IntensitySpec};
