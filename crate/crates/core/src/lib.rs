//! Finite-dimensional laboratory for block operators on `ℓp`-sums of `ℓ₁`
//! blocks: mixed norms, certified operator norms, the diagonal embedding and
//! its left inverse, and the row/column sign-flip averaging recursion.

pub mod cli;
pub mod error;
pub mod io;
pub mod norms;
pub mod operators;
pub mod seeding;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};
pub use operators::{BlockOperator, TongTrace};
pub use spaces::{BlockVector, Exponent, Sign, SpaceSpec};
