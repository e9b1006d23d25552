//! Semidefinite programming backend.
//!
//! Problems are posed in block form: minimize `<C, X>` over a block-diagonal
//! variable whose blocks are either positive semidefinite matrices or
//! nonnegative vectors, subject to scalar linear constraints `<A_i, X> (=|<=|>=) b_i`.
//! [`InteriorPoint`] solves them with an infeasible-start primal-dual path
//! following method (Nesterov-Todd direction with an HKM fallback,
//! Mehrotra predictor-corrector).
//!
//! Complex Hermitian variables are handled through [`hermitian_embed`].
//! Relaxed solutions can be brought to low rank with [`reduce_rank`], and
//! rank-one candidates are recovered with [`gaussian_randomize`].

mod embed;
mod error;
mod problem;
mod purify;
mod randomize;
mod solver;

pub use embed::{hermitian_embed, hermitian_from_embedding, is_hermitian};
pub use error::SdpError;
pub use problem::{Block, BlockKind, BlockTerm, Coeff, Constraint, Relation, SdpProblem};
pub use purify::{reduce_rank, Functional, PurifyReport};
pub use randomize::{
    complex_gaussian_sample, gaussian_randomize, psd_factor, rank_ratio_of, RandomizationError, RandomizationOutcome,
    Score, RANK_ONE_RATIO,
};
pub use solver::{solve, BlockValue, InteriorPoint, IterationRecord, SdpBackend, SdpSolution, SolveStatus};

/// Complex scalar used throughout the workspace.
pub type C64 = nalgebra::Complex<f64>;
