//! Exact training of few-bit integer neural networks with a chain of
//! mixed-integer linear programs, and a subset-vote ensemble built from them.
//!
//! A network with weights in `{-P, ..., P}` is trained in up to three stages:
//! Sat-Margin maximizes the number of confidently correct training samples,
//! Max-Margin maximizes per-neuron activation margins on those samples, and
//! Min-Weight minimizes the number of non-zero weights while keeping the
//! margins. One network per class subset is combined by majority voting.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod heuristic;
pub mod inference;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use model::{
    compute_data_bound, make_encoding, Architecture, ClassEncoding, ClassId, DataBound,
    LabeledSample, WeightAssignment,
};
