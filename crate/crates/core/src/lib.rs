//! Wideband RIS-aided downlink: channel model, rate and positioning
//! metrics, two-stage power minimization and scenario sweeps.

pub mod beamform;
pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod phase;
pub mod scenario;

pub use ipac_sdp::C64;

pub use config::{PebMode, PhaseMode, SystemConfig};
pub use error::{CoreError, Result};
