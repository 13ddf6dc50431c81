//! Dense linear algebra, reverse-mode autodiff and parameter storage shared
//! by the encoder and the task heads.

pub mod graph;
pub mod mat;
pub mod params;

pub use graph::{Graph, Var};
pub use mat::Mat;
pub use params::{Gradients, ParamStore};
