//! Numerical laboratory for conformal removability of planar compact sets.
//!
//! The crate discretizes a compact set on a square lattice and measures it
//! three ways: through the 2-modulus of curve families that must avoid it
//! (or may travel through it for free), through the path metric of a
//! conformal weight that vanishes on it, and through Hausdorff content and
//! box-counting dimension in either metric.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod grid;
pub mod hausdorff;
pub mod lab;
pub mod mask_io;
pub mod metric;
pub mod modulus;
pub mod runner;
pub mod sets;
pub mod weight;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::{Grid, Point, Rect};
pub use sets::{CompactSetSpec, PixelMask};
