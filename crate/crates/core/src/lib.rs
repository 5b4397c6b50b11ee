pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod helmholtz;
pub mod linalg;
pub mod momentum;
pub mod output;
pub mod quadrature;
pub mod sampling;
pub mod saddle;
pub mod transport;

pub use error::{Error, Result};
