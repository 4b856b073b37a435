pub mod brain_extraction;
pub mod cli;
pub mod defacing;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod morphology;
pub mod nifti;
pub mod phantom;
pub mod registration;
pub mod volume;

pub use error::{Error, Result};
