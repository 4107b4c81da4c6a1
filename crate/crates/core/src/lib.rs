//! Flight-dynamics toolkit for a humanoid robot lifted by four ducted fans:
//! two fixed on the waist and two on the feet, the latter pitched by the
//! ankles to vector their thrust.
//!
//! - [`wrench`]: net force/torque of the four fans.
//! - [`envelope`] and [`trim`]: pitch-torque authority and hover equilibrium.
//! - [`control`]: PD foot-pitch attitude controller.
//! - [`sim`]: fixed-step takeoff simulation with CSV/JSON logs.

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod envelope;
pub mod robot;
pub mod sim;
pub mod spatial;
pub mod trim;
pub mod wrench;

pub use envelope::{EnvelopeConstraint, EnvelopePoint, Strategy};
pub use robot::{builtin_posture, geometry_from_posture, FanLimits, Posture, RobotGeometry};
pub use spatial::{EulerAngles, UnitQuat, Vec3};
pub use trim::{hover_trim, Trim};
pub use wrench::{FanState, Wrench};
