pub mod bench;
pub mod cli;
pub mod dft;
pub mod error;
pub mod estimator;
pub mod gespar;
pub mod gn;
pub mod pred;
pub mod recovery;
pub mod rng;
pub mod signal;
pub mod support;

pub use error::{Error, Result};
