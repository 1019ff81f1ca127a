pub mod assembly;
pub mod bench;
pub mod error;
pub mod estimators;
pub mod mesh;
pub mod ocp;
pub mod quadrature;
pub mod solvers;
pub mod spaces;
pub mod sparse;

pub use error::{Error, Result};
