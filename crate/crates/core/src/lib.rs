//! High-level autonomy stack for a self-balancing electric scooter.
//!
//! The crate provides the pieces needed to follow a geo-referenced corridor
//! path with a small non-holonomic vehicle:
//!
//! * [`geodesy`] — WGS-84 geodetic ↔ local East-North-Up conversions,
//! * [`pathmodel`] — waypoint paths, projection, and corridor signed distance,
//! * [`vehicle`] — single-track kinematics, axle transforms, roll set points,
//! * [`localization`] — EKF fusing GNSS fixes with encoder odometry,
//! * [`refgen`] — per-step discretization of the path into a local reference,
//! * [`nmpc`] — multiple-shooting SQP tracking controller with corridor and
//!   balancing constraints,
//! * [`sim`] — deterministic multirate closed-loop simulator and run audits,
//! * [`cli`] — config loading and the `run` / `check-path` / `replay` commands.

pub mod cli;
pub mod config;
pub mod geodesy;
pub mod localization;
pub mod nmpc;
pub mod pathmodel;
pub mod plot;
pub mod refgen;
pub mod sim;
pub mod vehicle;
