//! Recovery of mass-action chemical reaction networks from concentration
//! time series.
//!
//! The pipeline runs from a [`model::CrnModel`] (or measured data) through
//! cubic-spline operators, sparse regression of the coefficient matrix in a
//! differential or an integral formulation, and finally a constrained fit of
//! the Kirchhoff matrix that yields the reaction graph.

pub mod analysis;
pub mod basis;
pub mod driver;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod nnls;
pub mod ode;
pub mod presets;
pub mod recovery;
pub mod simulate;
pub mod spline;

pub use basis::MonomialBasis;
pub use error::{CrnError, Result};
pub use model::{CrnModel, KirchhoffMatrix, Reaction, ReactionList};
pub use recovery::Formulation;
pub use spline::TimeGrid;
