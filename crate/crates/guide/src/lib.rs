//! The chapters of the `book/` directory, included as module documentation
//! so that `cargo test` compiles and runs every code example in them.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/linearization.md")]
pub mod linearization {}

#[doc = include_str!("../../../book/src/voting.md")]
pub mod voting {}

#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
