// NaN-rejecting checks are written as `!(x > 0.0)` on purpose; index loops
// mirror the grid notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod dataprep;
pub mod error;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod pipeline;

pub use error::{Error, Result};
