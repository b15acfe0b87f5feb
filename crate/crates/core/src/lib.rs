//! Modality-aware representation learning for sketch-based image retrieval.

pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
