//! Dense row-major tensors and a tape that records primitive operations for
//! reverse-mode differentiation.
//!
//! A [`Graph`] owns every value produced during a forward pass. Operations
//! return [`Var`] handles into the graph; calling [`Graph::backward`] on a
//! scalar handle fills gradient buffers for every node that requires one.
//! Graphs are single-threaded, but independent graphs may live on
//! independent threads.
//!
//! Broadcasting is intentionally limited to adding a bias along the trailing
//! axis ([`Graph::add_bias`]) and scaling rows ([`Graph::scale_rows`]); every
//! other shape disagreement is an error.

mod error;
pub mod gradcheck;
mod graph;
mod kernels;
mod ops;
mod real;
mod tensor;

pub use error::GradError;
pub use graph::{Graph, Var};
pub use ops::GruParams;
pub use ops::conv::{conv2d_output_extent, conv_transpose2d_output_extent};
pub use real::Real;
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, GradError>;
