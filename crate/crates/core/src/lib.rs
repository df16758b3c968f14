pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
