//! Low-bias stabilization of an active magnetic bearing under voltage saturation.
//!
//! The crate contains the bearing model, a bounded feedback for the triple
//! integrator together with its control-Lyapunov function, the lifted feedback
//! for the bearing, a fixed-step simulator and a set of sampling-based
//! certificates that check the Lyapunov inequalities numerically.

pub mod clf;
pub mod config;
pub mod controller;
pub mod error;
pub mod model;
pub mod saturation;
pub mod sim;
pub mod sweep;
pub mod verify;

pub use clf::{Clf, ZState};
pub use controller::{AmbController, ChainController, GainSet, GainViolation};
pub use error::{Error, Result};
pub use model::{AmbModel, AmbState, ChainState, FullState, PhysicalParams};
pub use saturation::{SaturationKind, SaturationSpec};
