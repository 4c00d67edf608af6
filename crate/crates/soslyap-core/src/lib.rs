//! Sum-of-squares Lyapunov certificates for scalar parabolic PDEs
//!
//! `w_t = a(x) w_xx + b(x) w_x + c(x) w` on `[0,1]` with `w(0)=0` and a
//! Neumann input `w_x(1)=u`. Lyapunov functionals are multiplier-plus-kernel
//! operators whose positivity is parameterized by Gram matrices, so stability
//! analysis, controller synthesis and observer synthesis all compile to
//! semidefinite feasibility problems.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! parallel drivers live in the `soslyap` crate.
#![no_std]

extern crate alloc;

pub mod affine;
pub mod gram;
pub mod kernel;
pub mod loi;
pub mod observer;
pub mod poly;
pub mod quad;
pub mod sdp;
pub mod sim;
pub mod stability;
pub mod synthesis;
pub mod system;

pub use affine::Affine;
pub use gram::{GramCertificate, GramLayout};
pub use kernel::{DiscreteOperator, KernelTriple};
pub use loi::{Backend, FeasibilityProblem, SolveOutcome, Status};
pub use poly::{Mono, MonomialBasis, Poly, Var};
pub use system::{Boundary, PdeSystem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("polynomial has a monomial outside the basis")]
    BasisTooSmall,
    #[error("symbolic degree {degree} exceeds cap {cap}")]
    DegreeOverflow { degree: u32, cap: u32 },
    #[error("certificate degrees ({d1}, {d2}) cannot represent the target")]
    DegreeDeficit { d1: u16, d2: u16 },
    #[error("multiplier is not positive on [0,1] (min {min:.3e})")]
    MNotPositive { min: f64 },
    #[error("Neumann series diverges")]
    SeriesDiverging,
    #[error("operator inversion failed: residual {residual:.3e}")]
    InversionFailed { residual: f64 },
    #[error("bracket [{lo}, {hi}] does not straddle the feasibility boundary")]
    BadBracket { lo: f64, hi: f64 },
    #[error("grid mismatch: {0} vs {1} nodes")]
    GridMismatch(usize, usize),
    #[error("controller and observer were built for different systems")]
    IncompatibleSystems,
    #[error("solver did not return a feasible point")]
    NotFeasible,
    #[error("invalid input: {0}")]
    Invalid(&'static str),
}
