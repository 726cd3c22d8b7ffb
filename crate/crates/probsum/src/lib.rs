//! Summation formulas for integer-valued random variables.
//!
//! The crate cross-validates a family of summation identities numerically:
//! factorial moments computed by three independent routes (direct
//! expectation, survival-weighted tail sums, and PGF derivative limits),
//! the factorial-moment tail bound optimized over integer order, exact
//! distributional identities, random-walk positivity/argmax
//! equidistribution, and stopped-sum expectations reconciled against Monte
//! Carlo.

pub mod bounds;
pub mod dist;
pub mod identities;
pub mod moments;
pub mod rng;
pub mod series;
pub mod stopped;
pub mod walks;

pub use dist::{DistError, Distribution};
pub use series::{SeriesError, SeriesPolicy, SeriesResult, TailMode};
