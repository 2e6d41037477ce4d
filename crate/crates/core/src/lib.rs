//! Best simultaneous approximation (BSA) of a family of functions from a
//! finite-dimensional subspace.
//!
//! Given tabulated functions `f_a` (one per parameter `a`) on a finite grid
//! `X` and a basis `h_1..h_n` tabulated on the same grid, the crate computes
//! coefficients `c*` minimizing the worst deviation
//!
//! ```text
//! max_a ||| f_a - sum_j c_j h_j |||
//! ```
//!
//! in either the uniform norm over the grid (with an absolute-value or
//! Euclidean codomain norm) or a weighted discrete `L^p` norm. Every solve
//! produces an optimality certificate made of at most `n + 1` weighted
//! support atoms, and every certificate can be checked independently of the
//! solver that produced it.
//!
//! All optimality claims are exact on the grid. Refining the grid is the
//! caller's job.
//!
//! Module map:
//!
//! - [`problem`]: grids, tabulated family and basis, problem-file ingestion.
//! - [`lp`]: dense primal simplex with dual multipliers.
//! - [`minimax`]: discrete minimax engine (epigraph LP and Kelley cutting
//!   planes), support extraction and saddle verification.
//! - [`uniform`]: uniform-norm BSA and its certificates.
//! - [`unicity`]: Haar checks and the strong-unicity constant.
//! - [`lp_norm`]: weighted `L^p` BSA, norming functionals and certificates.
//! - [`io`]: JSON formatting shared by the library and the CLI.

pub mod io;
pub mod linalg;
pub mod lp;
pub mod lp_norm;
pub mod minimax;
pub mod problem;
pub mod report;
pub mod unicity;
pub mod uniform;

pub use lp::{solve_lp, LpError, LpProblem, LpResult, LpStatus, RowSense};
pub use lp_norm::{
    lp_norm, norming_functional, solve_lp_bsa, verify_lp_certificate, DualFunction, LpBsaError,
    LpCertificate, LpSolution,
};
pub use minimax::{
    extract_support, solve_minimax, verify_saddle, AffineFamily, ConvexOracle, MinimaxError,
    MinimaxInstance, MinimaxOptions, MinimaxSolution, SaddleCertificate, SupportAtom,
};
pub use problem::{
    hull_family, load_problem, Basis, CodomainNorm, Coefficients, DomainGrid, FunctionFamily,
    MeasureGrid, ParameterGrid, ProblemError, SampledProblem,
};
pub use report::{Check, Report};
pub use unicity::{check_strong_unicity, haar_check, strong_unicity_gamma, UnicityData, UnicityError};
pub use uniform::{
    certificate_of, solve_uniform_bsa, verify_bsa_by_definition, verify_uniform_certificate, Objective,
    UniformCertificate, UniformError, UniformSolution,
};
