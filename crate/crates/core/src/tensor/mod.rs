//! Dense tensors, a reverse-mode computation record and a finite-difference
//! gradient checker.

mod array;
pub mod gradcheck;
mod graph;
mod params;

pub use array::{sigmoid, Tensor};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use graph::{smooth_l1, smooth_l1_term, Graph, Var};
pub use params::ParameterStore;
