pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod hash;
pub mod knowledge;
pub mod model;
pub mod nn;
pub mod run;

pub use error::{Error, Result};
