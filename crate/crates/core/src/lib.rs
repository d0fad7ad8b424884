pub mod calculus;
pub mod capacities;
pub mod error;
pub mod extended;
pub mod grid;
pub mod linalg;
pub mod optim;
pub mod poincare;
pub mod polynomials;
pub mod suites;
pub mod synthesis;

pub use error::{Error, Result};
