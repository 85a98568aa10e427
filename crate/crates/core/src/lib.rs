//! Tag mining and personality regression over book tags and page likes.
//!
//! Raw `(book, tag, count)` applications and user records go through
//! filtering, tf-idf weighting, low-rank tag similarity, density-based tag
//! clustering, page consolidation, and finally correlation tables and
//! trait regressions. [`synth`] generates corpora with planted structure.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod lexsim;
pub mod lowrank;
pub mod matrix;
pub mod numeric;
pub mod registry;
pub mod regress;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
