//! Stability-based conformal risk control.
//!
//! Calibrators pick a parameter θ̂ from calibration data so that the expected
//! loss on a fresh point is controlled. Monotone losses use classical
//! conformal risk control; non-monotone losses are handled through the
//! stability of the calibrator, either certified analytically (discretized,
//! smooth, selective and ERM families) or estimated with the bootstrap.

pub mod calibrate;
pub mod crc;
pub mod data;
pub mod erm;
pub mod error;
pub mod harness;
pub mod lambert;
pub mod loss;
pub mod ltt;
pub mod risk;
pub mod selective;
pub mod stability;

pub use calibrate::{CalibrationResult, Calibrator, ConstantCalibrator, ThetaHat};
pub use data::{Dataset, Label, LabelKind, Sample};
pub use error::{Error, Result};
pub use loss::{FnLoss, Loss};
