//! Command-line front end and teleoperation service.

pub mod teleop;
pub mod wire;
