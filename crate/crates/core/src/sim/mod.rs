//! Fixed-step takeoff simulation: rigid-body integration, ground phase,
//! liftoff detection, actuator lag and logging.

pub mod dynamics;
pub mod log;
pub mod scenario;

pub use dynamics::{dynamics_step, dynamics_step_with, Diverged, Integrator, RigidBodyState};
pub use log::{Crossing, Events, LogRow, Phase, SimLog, SIM_CSV_HEADER};
pub use scenario::{
    detect_liftoff, run_scenario, ImuNoise, Perturbation, ScenarioConfig, ScenarioError,
};
