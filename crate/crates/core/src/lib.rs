//! Classical simulator for QKD post-processing.
//!
//! The crate is layered bottom-up: GF(2) linear algebra, Pauli operators
//! and commutation analysis, a Bell-diagonal channel simulator, Cascade
//! reconciliation with one-time-pad encrypted parities, CSS key
//! extraction, and the end-to-end prepare-and-measure pipeline.

pub mod bellsim;
pub mod bitlinalg;
pub mod cascade;
pub mod csscode;
pub mod pauli;
pub mod pipeline;

pub use bitlinalg::{BitMatrix, BitVec, DimensionError};
