pub mod checks;
pub mod cli;
pub mod detgreen;
pub mod error;
pub mod evolution;
pub mod kicks;
pub mod model;
pub mod numerics;
pub mod perturbation;
pub mod sliced;

pub use error::{Error, Result};
