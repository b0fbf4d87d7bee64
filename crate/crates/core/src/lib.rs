//! Kronecker-sparse (KS) matrix multiplication on the CPU.
//!
//! A KS factor with pattern `(a, b, c, d)` is supported on
//! `I_a ⊗ 1_{b×c} ⊗ I_d`. This crate stores such factors, converts them into
//! the representations used by several multiplication backends, and computes
//! `Y = X·Kᵀ` for batches in either memory layout.

pub mod batch;
pub mod chain;
pub mod error;
pub mod factor;
pub mod fixture;
pub mod multiply;
pub mod pattern;
pub mod scalar;
pub mod shuffle;
pub mod stats;
pub mod timing;
pub mod traffic;

pub use batch::{approx_equal, default_tolerances, ApproxReport, BatchMatrix, Layout};
pub use chain::{dyadic_patterns, hadamard_chain, ChainBuffers, ChainCost, KsChain};
pub use error::{KsError, Result};
pub use factor::{BmmTensor, CsrMatrix, DenseMatrix, KsFactor, TileStore};
pub use multiply::{
    measure_permutation_share, mul_contraction, mul_csr, mul_dense_baseline, mul_fused,
    mul_permuted, mul_reference, multiply, with_threads, Backend, PermutedSteps, PreparedFactor,
    Scratch, TilePlan,
};
pub use pattern::{KsPattern, SupportMask, TileIndexSets};
pub use scalar::{Scalar, ScalarKind};
pub use shuffle::{
    baseline_permutations, block_diagonalize, kron_identity_shuffle, perfect_shuffle,
    permute_columns, Direction, PermutationVector,
};
pub use timing::{measure, TimerConfig, Timing};
pub use traffic::{traffic, TrafficReport};
