//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters live in a
//! [`ParamStore`] and are copied into the graph as leaves with [`ParamStore::bind`].

mod check;
mod graph;
pub mod nn;
mod params;
mod tensor;

pub use check::gradient_check;
pub use graph::{Graph, Var};
pub use params::{clip_global_norm, Adam, Bound, ParamId, ParamStore};
pub use tensor::Tensor;

