//! Nonstationary iterated Tikhonov regularization with uniformly convex
//! penalties on discretized `L^p` spaces.
//!
//! Everything is generic over a [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`, which is what the experiment harness uses.

pub mod error;
pub mod inner_cg;
pub mod nit_solver;
pub mod operators;
pub mod penalties;
pub mod scalar;
pub mod spaces;

pub use error::{Error, Result};
pub use inner_cg::{InnerProblem, InnerSettings, InnerStats, Objective};
pub use nit_solver::{
    AlphaSchedule, NitSolver, NitState, RunReport, StopKind, StoppingRule, Termination,
};
pub use operators::{estimate_eta, EllipticOp, ForwardOp, IntegralOp};
pub use penalties::{Penalty, PenaltyKind};
pub use scalar::Scalar;
pub use spaces::{pairing, GridFn, GridSpace, Variance};

pub type GridSpace64 = GridSpace<f64>;
pub type GridFn64 = GridFn<f64>;
pub type Penalty64 = Penalty<f64>;
pub type IntegralOp64 = IntegralOp<f64>;
pub type EllipticOp64 = EllipticOp<f64>;
pub type AlphaSchedule64 = AlphaSchedule<f64>;
pub type StoppingRule64 = StoppingRule<f64>;
pub type RunReport64 = RunReport<f64>;

pub type GridSpace32 = GridSpace<f32>;
pub type GridFn32 = GridFn<f32>;
pub type Penalty32 = Penalty<f32>;
