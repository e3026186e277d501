//! Discrete-time simulation of downlink resource allocation for a fleet of
//! edge-controlled AGVs sharing one LTE-style resource grid.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, the CLI and sweep
//! orchestration live in `wncs-cli`.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod control;
mod error;
pub mod link_adaptation;
pub mod numerics;
pub mod scheduler;
pub mod simulator;
pub mod stability;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub mod prelude {
    pub use crate::channel::{FadingState, RadioConfig};
    pub use crate::control::{ControlCommand, Gains, Pose, TrackShape, TrackSpec};
    pub use crate::link_adaptation::{BlerCurve, Catalogue, McsEntry};
    pub use crate::scheduler::{AllocationDecision, PolicyKind};
    pub use crate::simulator::{AgvStatus, RunSummary, SimConfig, Simulation};
    pub use crate::stability::{PbbForm, StabilityParams};
    pub use crate::Error;
}
