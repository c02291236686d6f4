//! Reflection of paths on the nonnegative orthant.

pub mod analysis;
pub mod cli;
pub mod dynamic;
pub mod error;
pub mod experiment;
pub mod mmatrix;
pub mod processes;
pub mod skorohod;

pub use error::{Error, Result};
pub use mmatrix::{Matrix, RoutingMatrix};
pub use skorohod::{reflect, ReflectionSolution, TimeGrid, VectorPath};
