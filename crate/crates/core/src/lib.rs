//! Numerical verification of the mollification approach to interior
//! parabolic Schauder estimates.
//!
//! The crate builds the objects the argument is made of (parabolic
//! mollifiers, Hölder seminorms in the parabolic metric, heat balls and
//! their mean-value kernel, manufactured variable-coefficient problems) and
//! measures every inequality of the chain on concrete functions.

// `!(x > 0.0)` rejects NaN too; index loops mirror the tensor formulas.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod cli;
pub mod error;
pub mod field;
pub mod heatball;
pub mod holder;
pub mod manufactured;
pub mod mollify;
pub mod numfmt;
pub mod verify;

pub use error::{Error, Result};
