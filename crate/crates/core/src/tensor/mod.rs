//! Dense matrices, reverse-mode differentiation and optimizers.

mod dense;
mod optim;
mod tape;

pub use dense::DenseMatrix;
pub use optim::{sgd_step, Adam};
pub use tape::{grad_check, ParamId, ParamStore, Parameter, Reduce, Tape, Var};
