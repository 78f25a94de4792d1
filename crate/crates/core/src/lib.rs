pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Result, SanError};
pub use tensor::{Gradients, RngStream, Tape, Tensor, Var};
