//! Dense matrices, learnable parameters, reverse-mode differentiation and a
//! central-difference gradient checker.

mod gradcheck;
mod matrix;
mod param;
mod tape;

pub use gradcheck::{
    finite_difference_check, finite_difference_check_with, relative_error, Entries,
    GradCheckReport, WorstEntry,
};
pub use matrix::{dot, Matrix};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{sigmoid, softplus, Gradients, Profile, Section, Tape, Var};
