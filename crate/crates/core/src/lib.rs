//! Parallel reservoir-computing emulators of chaotic dynamical systems.
//!
//! The crate trains Echo State Networks and locality-constrained nonlinear
//! vector autoregressions (NVAR) to emulate gridded turbulence, with
//! halo-based domain decomposition, ridge-regression readouts, spectral
//! skill diagnostics, and a two-stage Bayesian macro-parameter search.
//!
//! Numerics are generic over the scalar type through [`Scalar`]; the
//! executable pipeline (persistence, CLI, experiments) is pinned to `f64`
//! via the aliases at the crate root.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hyperopt;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nvar;
pub mod parallel;
pub mod report;
pub mod reservoir;
pub mod rng;
pub mod rollout;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};

use std::fmt;

/// Floating-point scalar the numerical core is generic over.
///
/// `f32` and `f64` satisfy the blanket implementation. Random draws are
/// always generated at `f64` resolution and narrowed, so seeds produce the
/// same stream of values regardless of the scalar in use.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + ndarray::ScalarOperand
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert a finite `f64` constant, panicking on failure (only possible
    /// for non-finite or out-of-range inputs, which never arise for the
    /// literals this is used with).
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FloatConst
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + num_traits::NumAssign
        + ndarray::ScalarOperand
        + std::iter::Sum
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Scalar used by the persisted pipeline: containers store 64-bit floats.
pub type Real = f64;

/// Concrete aliases for the high-traffic types at the default precision.
pub type Trajectory64 = trajectory::Trajectory<Real>;
pub type DatasetSplit64 = trajectory::DatasetSplit<Real>;
pub type EsnModel64 = reservoir::EsnModel<Real>;
pub type NvarModel64 = nvar::NvarModel<Real>;
pub type Forecast64 = rollout::Forecast<Real>;
pub type SpectrumSeries64 = metrics::SpectrumSeries<Real>;
