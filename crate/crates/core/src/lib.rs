pub mod audit;
pub mod checkpoint;
pub mod dataset;
pub mod depgraph;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod inference;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
