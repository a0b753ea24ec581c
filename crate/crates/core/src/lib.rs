//! Category-level object pose and size estimation from normalized object
//! coordinate maps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod canonical;
pub mod category;
pub mod eval;
pub mod compositor;
pub mod error;
pub mod fit;
pub mod geom;
pub mod io;
pub mod loss;
pub mod render;

pub use error::{Error, Result};
