//! Reverse-mode automatic differentiation on a per-forward tape.
//!
//! A [`Graph`] records every operation applied to [`Var`]s. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradients of all leaves that require them. Parameters live in a
//! [`ParamStore`] outside the graph; [`Graph::param`] binds a named parameter
//! to the tape once, so every use of that name shares one leaf.
//!
//! All values are kept in standard (row-major) layout.

mod conv;
mod graph;
mod linalg;
mod ops;
mod params;

pub mod check;

pub use graph::{Gradients, Graph, Var};
pub use params::{Param, ParamError, ParamStore};

use std::fmt::{Debug, Display};

/// Element type of the tape: `f32` for training, `f64` for gradient checks.
pub trait Float:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
