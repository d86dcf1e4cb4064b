//! Modeling, power flow, and state estimation for four-wire low-voltage
//! distribution grids.
//!
//! The crate covers the full chain from conductor geometry to benchmark
//! reports:
//!
//! * [`netmodel`] builds series impedance matrices from conductor geometry,
//!   reduces or keeps the neutral conductor explicitly, models the MV/LV
//!   transformer, and assembles nodal admittance matrices for a radial feeder.
//! * [`powerflow`] solves the unbalanced four-wire (or three-wire) network by
//!   backward/forward sweep.
//! * [`metering`] turns a power flow solution into noisy smart-meter readings
//!   and attaches the virtual neutral measurements used by the four-wire
//!   estimator.
//! * [`estimator`] implements weighted least squares state estimation with
//!   equality constraints, in a conventional three-wire variant and a
//!   neutral-aware four-wire variant.
//! * [`bench`] runs seeded Monte Carlo comparisons of the two estimators over
//!   scenario sweeps and exports the error metrics.

pub mod bench;
pub mod estimator;
pub mod metering;
pub mod netmodel;
pub mod powerflow;
