//! Solvers and convergence verification for elliptic variational inequalities
//! of the second kind, posed in finite-dimensional coefficient spaces.

pub mod criterion;
pub mod error;
pub mod fem;
pub mod functional;
pub mod linalg;
pub mod operator;
pub mod problem;
pub mod selftest;
pub mod sets;
pub mod solver;
pub mod space;
pub mod studies;

pub use error::{Error, Result};
pub use functional::{ConvexFunctional, Kink};
pub use linalg::Matrix;
pub use operator::{MonotoneOperator, OperatorKind, PenaltyOperator};
pub use problem::VIProblem;
pub use sets::ConvexSet;
pub use solver::{
    solve_penalized, solve_qvi_friction, solve_vi, FrictionQvi, SolveConfig, SolveMethod,
    SolveReport,
};
pub use space::{CoeffVector, HilbertSpace, InnerProduct};
pub use criterion::{
    check_criterion, classify_sequence, epsilon_residual, CandidateSequence, CriterionConfig,
    CriterionReport, DecayTest, ResidualMode,
};
