//! Voting-classifier complexity toolkit.
//!
//! Trains convex combinations of decision stumps (AdaBoost, bagging),
//! materializes empirical margin distributions, computes per-classifier
//! complexity measures (weight sparsity, effective dimension, pointwise and
//! cluster variances, base covering numbers and entropy integrals), and
//! evaluates a family of margin-type generalization bounds as term-by-term
//! reports. The randomized approximation constructions behind the sparsity
//! and cluster bounds (Maurey sampling, cluster sampling, paired-difference
//! variance estimation) are implemented directly and checked by Monte Carlo.
//!
//! All bound reports are shape/relative-comparison tools: the absolute
//! constants of the underlying inequalities are unknown and exposed as the
//! user parameters `K` and `t`.
//!
//! Data-parallel inner loops (stump search, per-row evaluation, Monte Carlo
//! replication) run on rayon when the `parallel` feature is enabled
//! (default) and fall back to plain sequential iteration otherwise. Both
//! modes produce bit-identical results.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check, and
// row loops index several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clusters;
pub mod covering;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod margins;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sparsity;
pub mod stump;
pub mod synth;
pub mod train;
pub mod verify;

pub use data::Dataset;
pub use ensemble::{ConvexEnsemble, Mode, Term};
pub use error::{Error, Result};
pub use margins::{MarginProfile, RampLoss, RampOrientation};
pub use report::{BoundParams, BoundReport};
pub use stump::Stump;
