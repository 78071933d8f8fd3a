//! File formats, dataset evaluation and rendering around `affordmap-core`.

pub mod basis_io;
mod error;
pub mod harness;
pub mod render;
pub mod tensor_io;

pub use error::{Error, Result};
