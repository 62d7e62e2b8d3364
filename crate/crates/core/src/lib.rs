//! Image-theory radio ray tracer.
//!
//! The crate builds a visibility tree of facet/edge sequences seen from a
//! transmitter, shrinks each beam with angular Z-buffer rectangles, then
//! backtraces, shadow-tests and evaluates GO/UTD fields at observation points.

pub mod azb;
pub mod engine;
pub mod error;
pub mod fields;
pub mod geom;
pub mod par;
pub mod shadow;
pub mod visibility;
pub mod vistree;

pub use error::{Error, Result};
