//! Similarity search over sets of vectors.
//!
//! A stored item here is not a single embedding but a small set of them,
//! and a query is a set as well. The relevance of a stored set `V` to a
//! query set `A` blends the best pairwise cosine with the average over all
//! `|A| * |V|` pairs, each term carrying a configurable weight.
//!
//! Scanning every stored set per query is exact but linear ([`oracle`]).
//! The engine instead flattens each stored set into one long block vector
//! and issues a handful of long-vector queries against a MIPS index, so the
//! heavy lifting becomes plain inner-product search ([`encode`], [`mips`],
//! [`engine`]). With a flat index the result is identical to the scan; with
//! an inverted-file index it trades a controlled amount of recall for
//! speed, which [`bench`] measures.

pub mod bench;
pub mod dataset;
pub mod encode;
pub mod engine;
mod error;
pub mod mips;
pub mod oracle;
pub mod sim;
pub mod types;
mod vecmath;

pub use error::{Error, Result};
pub use oracle::SearchHit;
pub use types::{PairwiseSims, SimParams, Vector, VectorSet, MIN_NORM};
