pub mod autograd;
pub mod container;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod interpret;
pub mod models;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
