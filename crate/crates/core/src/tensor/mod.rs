//! Dense tensors, parameter storage and tape-based reverse-mode autodiff.

pub mod gradcheck;
mod params;
mod tape;
mod value;

pub use params::{Component, ParamEntry, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use value::Tensor;

pub(crate) use tape::softmax_along;
pub(crate) use value::stable_sigmoid;

/// Elementwise logistic function, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    stable_sigmoid(x)
}

/// Softmax of a vector with max-subtraction.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    softmax_along(xs, &[xs.len()], 0)
}

#[cfg(test)]
mod tests;
