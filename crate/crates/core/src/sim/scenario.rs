use super::dynamics::{dynamics_step_with, Diverged, Integrator, RigidBodyState};
use super::log::{Crossing, Events, LogRow, Phase, SimLog};
use crate::control::{
    thrust_schedule, tune_gains, AttitudeController, ControlMode, ControllerGains, ThrustRamp,
    TuningTarget,
};
use crate::robot::{geometry_from_posture, FanLimits, GeometryParams, Posture, RobotError};
use crate::spatial::{deg, quat_to_euler, rad, wrap_angle, EulerAngles, Vec3};
use crate::trim::{hover_trim, TrimError};
use crate::wrench::{generalized_wrench_3d, FanState, Wrench};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const MAX_MISALIGNMENT_DEG: f64 = 10.0;
pub const THRUST_SCALE_RANGE: (f64, f64) = (0.8, 1.2);

/// Build errors. Divergence is not one of them: it ends the run with a
/// partial log.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Trim(#[from] TrimError),
}

/// Model errors injected into the simulated robot but not into the
/// controller's trim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Added to the CoM position, body frame, m.
    pub com_offset: Vec3,
    /// Ankle pitch error added to each commanded foot angle, rad.
    pub foot_axis_misalignment_left: f64,
    pub foot_axis_misalignment_right: f64,
    /// Multiplicative thrust errors: front, back, left, right.
    pub thrust_scale_error: [f64; 4],
}

impl Perturbation {
    pub fn none() -> Self {
        Self {
            com_offset: Vec3::zeros(),
            foot_axis_misalignment_left: 0.0,
            foot_axis_misalignment_right: 0.0,
            thrust_scale_error: [1.0; 4],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let limit = rad(MAX_MISALIGNMENT_DEG);
        for (side, m) in [
            ("left", self.foot_axis_misalignment_left),
            ("right", self.foot_axis_misalignment_right),
        ] {
            if !(m.abs() <= limit) {
                return Err(format!(
                    "{side} foot misalignment {:.3} deg exceeds {MAX_MISALIGNMENT_DEG} deg",
                    deg(m)
                ));
            }
        }
        let (lo, hi) = THRUST_SCALE_RANGE;
        if self
            .thrust_scale_error
            .iter()
            .any(|k| !(*k >= lo && *k <= hi))
        {
            return Err(format!("thrust scale factors must lie in [{lo}, {hi}]"));
        }
        if self.com_offset.iter().any(|v| !v.is_finite()) {
            return Err("CoM offset must be finite".into());
        }
        Ok(())
    }
}

impl Default for Perturbation {
    /// 10 mm forward CoM error and a +-2 deg ankle error.
    fn default() -> Self {
        Self {
            com_offset: Vec3::new(0.010, 0.0, 0.0),
            foot_axis_misalignment_left: rad(2.0),
            foot_axis_misalignment_right: rad(-2.0),
            thrust_scale_error: [1.0; 4],
        }
    }
}

/// Zero-mean Gaussian noise on the attitude and rate fed to the controller.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuNoise {
    /// rad
    pub attitude_sigma: f64,
    /// rad/s
    pub rate_sigma: f64,
}

impl ImuNoise {
    pub fn is_off(&self) -> bool {
        self.attitude_sigma == 0.0 && self.rate_sigma == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub posture: Posture,
    pub geometry: GeometryParams,
    pub limits: FanLimits,
    pub mode: ControlMode,
    /// `None` tunes gains from the linearized plant at start-up.
    pub gains: Option<ControllerGains>,
    pub tuning: TuningTarget,
    pub setpoint: EulerAngles,
    pub ramp: ThrustRamp,
    pub perturbation: Perturbation,
    pub duration: f64,
    pub dt: f64,
    pub control_rate_hz: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub imu_noise: ImuNoise,
}

impl ScenarioConfig {
    pub fn new(posture: Posture) -> Self {
        Self {
            posture,
            geometry: GeometryParams::default(),
            limits: FanLimits::default(),
            mode: ControlMode::BothOn,
            gains: None,
            tuning: TuningTarget::default(),
            setpoint: EulerAngles::LEVEL,
            ramp: ThrustRamp {
                target: 48.0,
                ramp_time: 0.5,
            },
            perturbation: Perturbation::default(),
            duration: 3.0,
            dt: 1e-3,
            control_rate_hz: 250.0,
            sample_rate_hz: 100.0,
            seed: 0,
            integrator: Integrator::SemiImplicit,
            imu_noise: ImuNoise::default(),
        }
    }

    fn steps_per(&self, rate_hz: f64, what: &str) -> Result<usize, String> {
        if !(rate_hz > 0.0) {
            return Err(format!("{what} rate must be positive"));
        }
        let ratio = 1.0 / (rate_hz * self.dt);
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * ratio {
            return Err(format!(
                "{what} period {} s is not an integer multiple of dt = {} s",
                1.0 / rate_hz,
                self.dt
            ));
        }
        Ok(n as usize)
    }

    /// Physics steps per controller update.
    pub fn control_every(&self) -> Result<usize, String> {
        self.steps_per(self.control_rate_hz, "controller")
    }

    /// Physics steps per log row.
    pub fn sample_every(&self) -> Result<usize, String> {
        self.steps_per(self.sample_rate_hz, "sample")
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |s: String| Err(ScenarioError::Invalid(s));
        if !(self.dt > 0.0 && self.dt <= super::dynamics::MAX_DT) {
            return bad(format!("dt must lie in (0, {}] s", super::dynamics::MAX_DT));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return bad("duration must be at least dt".into());
        }
        self.control_every().map_err(ScenarioError::Invalid)?;
        self.sample_every().map_err(ScenarioError::Invalid)?;
        self.posture.validate()?;
        self.limits.validate()?;
        self.ramp
            .validate(&self.limits)
            .map_err(ScenarioError::Invalid)?;
        self.perturbation
            .validate()
            .map_err(ScenarioError::Invalid)?;
        if let Some(g) = &self.gains {
            g.validate().map_err(ScenarioError::Invalid)?;
        }
        if !(self.tuning.damping > 0.0
            && self.tuning.omega_pitch > 0.0
            && self.tuning.omega_yaw > 0.0)
        {
            return bad("tuning damping and frequencies must be positive".into());
        }
        if !(self.imu_noise.attitude_sigma >= 0.0 && self.imu_noise.rate_sigma >= 0.0) {
            return bad("IMU noise sigmas must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground to airborne once the net world vertical force is positive.
pub fn detect_liftoff(_state: &RigidBodyState, wrench: &Wrench) -> Phase {
    if wrench.force_world.z > 0.0 {
        Phase::Airborne
    } else {
        Phase::Ground
    }
}

struct Extremes {
    pitch: f64,
    yaw: f64,
    roll: f64,
    yaw_unwrapped: f64,
    last_yaw: f64,
    crossings: Vec<Crossing>,
}

const THRESHOLDS: [(&str, f64); 5] = [
    ("abs_pitch_ge_10deg", 10.0),
    ("abs_pitch_ge_30deg", 30.0),
    ("abs_yaw_ge_20deg", 20.0),
    ("abs_yaw_ge_40deg", 40.0),
    ("altitude_ge_1m", 1.0),
];

impl Extremes {
    fn new() -> Self {
        Self {
            pitch: 0.0,
            yaw: 0.0,
            roll: 0.0,
            yaw_unwrapped: 0.0,
            last_yaw: 0.0,
            crossings: Vec::new(),
        }
    }

    /// Returns the attitude with yaw unwrapped against the previous call.
    fn update(&mut self, state: &RigidBodyState) -> EulerAngles {
        let e = quat_to_euler(&state.orientation);
        self.yaw_unwrapped += wrap_angle(e.yaw - self.last_yaw);
        self.last_yaw = e.yaw;
        self.pitch = self.pitch.max(deg(e.pitch.abs()));
        self.roll = self.roll.max(deg(e.roll.abs()));
        self.yaw = self.yaw.max(deg(self.yaw_unwrapped.abs()));
        let values = [
            deg(e.pitch.abs()),
            deg(e.pitch.abs()),
            deg(self.yaw_unwrapped.abs()),
            deg(self.yaw_unwrapped.abs()),
            state.position_world.z,
        ];
        for ((name, threshold), v) in THRESHOLDS.iter().zip(values) {
            if v >= *threshold && !self.crossings.iter().any(|c| c.name == *name) {
                self.crossings.push(Crossing {
                    name: name.to_string(),
                    time_s: state.time,
                });
            }
        }
        EulerAngles {
            yaw: self.yaw_unwrapped,
            ..e
        }
    }
}

/// Runs one takeoff: ground phase with the feet locked at trim, liftoff on
/// positive net vertical force, then closed-loop free flight. A tripped
/// divergence guard ends the run early with `events.diverged` set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimLog, ScenarioError> {
    cfg.validate()?;
    let nominal = geometry_from_posture(&cfg.posture, &cfg.geometry)?;
    let actual = nominal.with_com_offset(&cfg.perturbation.com_offset);
    let trim = hover_trim(&nominal, &cfg.limits, true)?;
    let gains = match &cfg.gains {
        Some(g) => g.clone(),
        None => tune_gains(&nominal, &trim, &cfg.tuning),
    };
    let mut controller = AttitudeController::new(
        gains,
        cfg.mode,
        cfg.setpoint,
        trim.foot_angle(),
        &cfg.posture,
        &cfg.limits,
    );
    let control_every = cfg.control_every().map_err(ScenarioError::Invalid)?;
    let sample_every = cfg.sample_every().map_err(ScenarioError::Invalid)?;
    let control_dt = control_every as f64 * cfg.dt;
    let n_steps = cfg.step_count();
    let two_second_step = (2.0 / cfg.dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let attitude_noise = Normal::new(0.0, cfg.imu_noise.attitude_sigma)
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let rate_noise = Normal::new(0.0, cfg.imu_noise.rate_sigma)
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

    let tau = cfg.limits.thrust_time_constant;
    let lag = if tau > 0.0 {
        1.0 - (-cfg.dt / tau).exp()
    } else {
        1.0
    };
    let pert = &cfg.perturbation;

    let mut state = RigidBodyState::at_rest();
    let mut thrusts = [0.0f64; 4];
    let mut phase = Phase::Ground;
    let mut command = (trim.foot_angle(), trim.foot_angle());
    let mut extremes = Extremes::new();
    let mut attitude = extremes.update(&state);
    let mut events = Events::default();
    let mut rows = Vec::with_capacity(n_steps / sample_every + 1);

    for n in 0..=n_steps {
        let t = n as f64 * cfg.dt;
        let schedule = thrust_schedule(t, &cfg.ramp);
        if phase == Phase::Airborne && n % control_every == 0 {
            let mut measured = attitude;
            let mut rates = state.angular_velocity_body;
            if !cfg.imu_noise.is_off() {
                measured.roll += attitude_noise.sample(&mut rng);
                measured.pitch += attitude_noise.sample(&mut rng);
                measured.yaw += attitude_noise.sample(&mut rng);
                rates += Vec3::from_fn(|_, _| rate_noise.sample(&mut rng));
            }
            let cmd = controller.step_measured(&measured, &rates, schedule, control_dt);
            command = (cmd.theta_left_cmd, cmd.theta_right_cmd);
        }
        let fan_state = FanState {
            f_front: thrusts[0],
            f_back: thrusts[1],
            f_left: thrusts[2],
            f_right: thrusts[3],
            theta_left: command.0 + pert.foot_axis_misalignment_left,
            theta_right: command.1 + pert.foot_axis_misalignment_right,
        };
        let wrench = generalized_wrench_3d(&fan_state, &actual, &state.orientation);
        if phase == Phase::Ground && detect_liftoff(&state, &wrench) == Phase::Airborne {
            phase = Phase::Airborne;
            events.liftoff_time_s = Some(t);
        }
        if n == two_second_step {
            events.altitude_at_2s_m = Some(state.position_world.z);
        }
        if n % sample_every == 0 {
            rows.push(LogRow {
                time: t,
                position: state.position_world,
                velocity: state.velocity_world,
                roll: attitude.roll,
                pitch: attitude.pitch,
                yaw: attitude.yaw,
                angular_velocity: state.angular_velocity_body,
                theta_left_cmd: command.0,
                theta_right_cmd: command.1,
                theta_left: fan_state.theta_left,
                theta_right: fan_state.theta_right,
                thrusts,
                force_world: wrench.force_world,
                torque_body: wrench.torque_body,
                phase,
            });
        }
        events.final_time_s = t;
        if n == n_steps {
            break;
        }

        if phase == Phase::Airborne {
            match dynamics_step_with(&state, &fan_state, &actual, cfg.dt, cfg.integrator) {
                Ok(next) => state = next,
                Err(Diverged { .. }) => {
                    events.diverged = true;
                    break;
                }
            }
        }
        // On the ground the pose is clamped and only the clock advances.
        state.time = (n + 1) as f64 * cfg.dt;
        attitude = extremes.update(&state);
        for (f, k) in thrusts.iter_mut().zip(pert.thrust_scale_error) {
            let target = (k * schedule).clamp(cfg.limits.thrust_min, cfg.limits.thrust_max_per_fan);
            *f += lag * (target - *f);
        }
    }

    events.never_lifted = events.liftoff_time_s.is_none();
    events.max_abs_pitch_deg = extremes.pitch;
    events.max_abs_yaw_deg = extremes.yaw;
    events.max_abs_roll_deg = extremes.roll;
    events.crossings = extremes.crossings;
    Ok(SimLog {
        sample_period: sample_every as f64 * cfg.dt,
        rows,
        events,
    })
}
