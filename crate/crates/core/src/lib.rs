//! Executable geometry of quotient feature spaces for permutation-invariant
//! and permutation-equivariant networks: group algebra, quotient metrics and
//! fundamental domains, covering numbers, generalization bounds, exact ReLU
//! sorting networks, and a DeepSets generalization-gap experiment.

pub mod bounds;
pub mod covering;
pub mod experiment;
pub mod error;
pub mod logspace;
pub mod nets;
pub mod permgroup;
pub mod qfs;
pub mod relunet;

pub use error::{Error, Result};
