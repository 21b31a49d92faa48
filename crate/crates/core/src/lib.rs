//! Ergodic optimization for full-branch expanding maps of the interval.
//!
//! The crate computes transfer-operator eigendata at inverse temperature
//! `β`, involution kernels and dual potentials on the full shift, their
//! zero-temperature limits, calibrated subactions on both sides, and a
//! certificate that the subaction is piecewise given by finitely many kernel
//! sections.
//!
//! Modules follow the data flow: [`symbolic`] and [`dynamics`] describe the
//! map, [`transfer`] the operator, [`kernel`] the involution kernels,
//! [`ergopt`] subactions and deviations, [`piecewise`] the selection and
//! breakpoint pipeline.

pub mod dynamics;
pub mod ergopt;
pub mod error;
pub mod expr;
pub mod io;
pub mod kernel;
pub mod par;
pub mod piecewise;
pub mod symbolic;
pub mod transfer;

pub use error::{Error, Result};
