//! Regular diffusions on star-shaped metric graphs, synthesised as rescaled,
//! time-changed Walsh Brownian motions.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: the star graph, its points and metric.
//! * [`measure`]: scale functions, speed measures, Stieltjes quadrature,
//!   change of scale and boundary classification.
//! * [`walsh`]: (sticky) Walsh Brownian motion paths and local-time fields.
//! * [`timechange`]: additive functionals, right inverses and the synthesis
//!   pipelines (Walsh to general diffusion, non-sticky to sticky).
//! * [`dirichlet`]: closed-form ball Dirichlet solutions and exit moments.
//! * [`verify`]: Monte Carlo and pathwise checks of the identities above.
//! * [`config`]: the JSON run configuration consumed by the `spdr` binary.

pub mod config;
pub mod dirichlet;
pub mod error;
pub mod graph;
pub mod measure;
pub mod timechange;
pub mod verify;
pub mod walsh;

pub use error::{Error, Result};
pub use graph::{EdgeId, GraphPoint, StarGraph};
pub use measure::{DiffusionSpec, EdgeMeasure, EdgeScale};
pub use walsh::{Bias, LocalTimeField, Path, Seed};
