//! Bounds on Bell-inequality violations for finite-dimensional bipartite states.
//!
//! * [`bell`]: inequalities, classical bounds, Bell operators.
//! * [`lb`]: see-saw lower bounds and the two-qubit Horodecki values.
//! * [`ub`]: Lagrange-dual upper bounds.
//! * [`nonstandard`]: closed-form values, collective measurements, local filtering.

pub mod bell;
pub mod error;
pub mod lb;
pub mod nonstandard;
pub mod qcore;
pub mod sdp;
pub mod states;
pub mod tol;
pub mod ub;

pub use error::{Error, Result};
