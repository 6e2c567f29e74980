//! Scale functions, speed measures and diffusion specifications.

mod boundary;
pub mod quadrature;
mod scale;
mod spec;
mod speed;

pub use boundary::{boundary_integrals, default_base_point, BoundaryClass, BoundaryIntegrals, ClassifierSettings, Growth};
pub use scale::{CirParams, CirScale, EdgeScale, MonotoneTable};
pub use spec::DiffusionSpec;
pub(crate) use spec::hex;
pub use speed::{cantor_function, Atom, Density, EdgeMeasure, Interval, SingularCdf};
