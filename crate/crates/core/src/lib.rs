//! Histogram functional summaries of minute-epoch activity counts and
//! penalized scalar-on-function regression.

pub mod basis;
pub mod error;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod model_select;
pub mod profile;
pub mod synth;
pub mod summary;

pub use error::{Error, Result};
