pub mod coeffs;
pub mod error;
pub mod expr;
pub mod field;
pub mod flows;
pub mod grid;
pub mod linalg;
pub mod model_file;
pub mod pdesolve;
pub mod roughpath;
pub mod transform;
pub mod zakai;

pub use error::{Error, Result};
