//! PD attitude control through the foot fans.
//!
//! The mean foot pitch steers the pitch torque through the foot fans' lever
//! below the CoM; the left/right foot pitch difference produces a yaw couple.
//! Thrust magnitudes are not used for attitude: all four fans follow one
//! preplanned ramp.

use crate::robot::{FanLimits, Posture, RobotGeometry};
use crate::sim::RigidBodyState;
use crate::spatial::{quat_pitch, quat_to_euler, wrap_angle, EulerAngles};
use crate::trim::Trim;
use crate::wrench::{generalized_wrench_3d, FanState};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// rad of mean foot pitch per rad of pitch error
    pub kp_pitch: f64,
    /// rad of mean foot pitch per rad/s of pitch rate error
    pub kd_pitch: f64,
    pub ki_pitch: f64,
    /// rad of differential foot pitch per rad of yaw error
    pub kp_yaw: f64,
    pub kd_yaw: f64,
    pub ki_yaw: f64,
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.kp_pitch,
            self.kd_pitch,
            self.ki_pitch,
            self.kp_yaw,
            self.kd_yaw,
            self.ki_yaw,
        ];
        if all.iter().all(|g| *g >= 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err("controller gains must be finite and non-negative".into())
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            kp_pitch: k * self.kp_pitch,
            kd_pitch: k * self.kd_pitch,
            ki_pitch: k * self.ki_pitch,
            kp_yaw: k * self.kp_yaw,
            kd_yaw: k * self.kd_yaw,
            ki_yaw: k * self.ki_yaw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlMode {
    BothOn,
    PitchOnly,
    AllOff,
}

impl ControlMode {
    pub const ALL: [ControlMode; 3] = [Self::BothOn, Self::PitchOnly, Self::AllOff];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BothOn => "both-on",
            Self::PitchOnly => "pitch-only",
            Self::AllOff => "all-off",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "both-on" | "bothon" => Ok(Self::BothOn),
            "pitch-only" | "pitchonly" => Ok(Self::PitchOnly),
            "all-off" | "alloff" => Ok(Self::AllOff),
            other => Err(format!(
                "unknown control mode `{other}` (expected both-on, pitch-only or all-off)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootCommand {
    pub theta_left_cmd: f64,
    pub theta_right_cmd: f64,
    /// Per-fan thrust from the preplanned ramp, N.
    pub thrust_schedule_value: f64,
}

pub fn pd_step(kp: f64, kd: f64, error: f64, error_rate: f64) -> f64 {
    kp * error + kd * error_rate
}

/// Linear per-fan thrust ramp from 0 N at t = 0 to `target` at `ramp_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrustRamp {
    pub target: f64,
    pub ramp_time: f64,
}

impl ThrustRamp {
    pub fn new(target: f64, ramp_time: f64, limits: &FanLimits) -> Result<Self, String> {
        let ramp = Self { target, ramp_time };
        ramp.validate(limits)?;
        Ok(ramp)
    }

    pub fn validate(&self, limits: &FanLimits) -> Result<(), String> {
        if !(self.target >= 0.0 && self.target <= limits.thrust_max_per_fan) {
            return Err(format!(
                "thrust ramp target {} N outside [0, {}] N",
                self.target, limits.thrust_max_per_fan
            ));
        }
        if !(self.ramp_time >= 0.0 && self.ramp_time.is_finite()) {
            return Err("thrust ramp time must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Per-fan thrust at time `t`; identical for all four fans.
pub fn thrust_schedule(t: f64, ramp: &ThrustRamp) -> f64 {
    if ramp.ramp_time <= 0.0 || t >= ramp.ramp_time {
        ramp.target
    } else {
        ramp.target * (t.max(0.0) / ramp.ramp_time)
    }
}

/// Target closed-loop poles for [`tune_gains`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTarget {
    pub damping: f64,
    pub omega_pitch: f64,
    pub omega_yaw: f64,
}

impl Default for TuningTarget {
    fn default() -> Self {
        Self {
            damping: 0.7,
            omega_pitch: 10.0,
            omega_yaw: 10.0,
        }
    }
}

/// Torque per radian of mean foot pitch and of differential foot pitch at
/// trim, by central differences through the wrench model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlAuthority {
    /// d(body pitch torque)/d(mean foot angle), N m/rad
    pub pitch: f64,
    /// d(body yaw torque)/d(delta) with left = mean - delta, right = mean + delta
    pub yaw: f64,
}

pub fn control_authority(geo: &RobotGeometry, trim: &Trim) -> ControlAuthority {
    let h = 1e-6;
    let q = quat_pitch(trim.theta_pitch);
    let base = trim.fan_state;
    let torque = |fs: FanState| generalized_wrench_3d(&fs, geo, &q).torque_body;
    let shift = |d_mean: f64, d_delta: f64| FanState {
        theta_left: base.theta_left + d_mean - d_delta,
        theta_right: base.theta_right + d_mean + d_delta,
        ..base
    };
    ControlAuthority {
        pitch: (torque(shift(h, 0.0)).y - torque(shift(-h, 0.0)).y) / (2.0 * h),
        yaw: (torque(shift(0.0, h)).z - torque(shift(0.0, -h)).z) / (2.0 * h),
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// PD gains placing each axis of the linearized double integrator
/// `I * accel = authority * command` at the target damping and frequency,
/// rounded to three significant figures.
pub fn tune_gains(geo: &RobotGeometry, trim: &Trim, target: &TuningTarget) -> ControllerGains {
    let auth = control_authority(geo, trim);
    let i_pitch = geo.inertia_body[(1, 1)];
    let i_yaw = geo.inertia_body[(2, 2)];
    let kp = |omega: f64, inertia: f64, b: f64| round_sig(omega * omega * inertia / b.abs(), 3);
    let kd = |omega: f64, inertia: f64, b: f64| {
        round_sig(2.0 * target.damping * omega * inertia / b.abs(), 3)
    };
    ControllerGains {
        kp_pitch: kp(target.omega_pitch, i_pitch, auth.pitch),
        kd_pitch: kd(target.omega_pitch, i_pitch, auth.pitch),
        ki_pitch: 0.0,
        kp_yaw: kp(target.omega_yaw, i_yaw, auth.yaw),
        kd_yaw: kd(target.omega_yaw, i_yaw, auth.yaw),
        ki_yaw: 0.0,
    }
}

/// Foot-pitch attitude controller with clamping and slew limiting. Holds the
/// previous command and the integrators between calls.
#[derive(Debug, Clone)]
pub struct AttitudeController {
    gains: ControllerGains,
    mode: ControlMode,
    setpoint: EulerAngles,
    trim_offset: f64,
    range: (f64, f64),
    rate_max: f64,
    last: (f64, f64),
    integral: (f64, f64),
}

impl AttitudeController {
    pub fn new(
        gains: ControllerGains,
        mode: ControlMode,
        setpoint: EulerAngles,
        trim_offset: f64,
        posture: &Posture,
        limits: &FanLimits,
    ) -> Self {
        let range = posture.foot_pitch_range;
        let start = trim_offset.clamp(range.0, range.1);
        Self {
            gains,
            mode,
            setpoint,
            trim_offset,
            range,
            rate_max: limits.foot_pitch_rate_max,
            last: (start, start),
            integral: (0.0, 0.0),
        }
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn trim_offset(&self) -> f64 {
        self.trim_offset
    }

    /// Last issued (left, right) command.
    pub fn last_command(&self) -> (f64, f64) {
        self.last
    }

    /// Unclamped, unslewed (left, right) foot angles for the given attitude.
    fn raw_command(
        &mut self,
        attitude: &EulerAngles,
        rates: &crate::spatial::Vec3,
        dt: f64,
    ) -> (f64, f64) {
        let g = &self.gains;
        if self.mode == ControlMode::AllOff {
            return (self.trim_offset, self.trim_offset);
        }
        // Positive effort asks for positive body torque about the axis.
        let e_pitch = self.setpoint.pitch - attitude.pitch;
        self.integral.0 += e_pitch * dt;
        let pitch_effort =
            pd_step(g.kp_pitch, g.kd_pitch, e_pitch, -rates.y) + g.ki_pitch * self.integral.0;
        // Foot fans sit below the CoM, so tilting them forward pitches the body back.
        let mean = self.trim_offset - pitch_effort;
        let delta = if self.mode == ControlMode::BothOn {
            let e_yaw = wrap_angle(self.setpoint.yaw - attitude.yaw);
            self.integral.1 += e_yaw * dt;
            pd_step(g.kp_yaw, g.kd_yaw, e_yaw, -rates.z) + g.ki_yaw * self.integral.1
        } else {
            0.0
        };
        (mean - delta, mean + delta)
    }

    pub fn step(&mut self, state: &RigidBodyState, thrust: f64, dt: f64) -> FootCommand {
        debug_assert!(dt > 0.0);
        let attitude = quat_to_euler(&state.orientation);
        self.step_measured(&attitude, &state.angular_velocity_body, thrust, dt)
    }

    /// Same as [`Self::step`] with an externally supplied attitude and rate
    /// measurement.
    pub fn step_measured(
        &mut self,
        attitude: &EulerAngles,
        rates: &crate::spatial::Vec3,
        thrust: f64,
        dt: f64,
    ) -> FootCommand {
        let (left, right) = self.raw_command(attitude, rates, dt);
        let max_step = self.rate_max * dt;
        let limit = |raw: f64, prev: f64| {
            raw.clamp(self.range.0, self.range.1)
                .clamp(prev - max_step, prev + max_step)
        };
        self.last = (limit(left, self.last.0), limit(right, self.last.1));
        FootCommand {
            theta_left_cmd: self.last.0,
            theta_right_cmd: self.last.1,
            thrust_schedule_value: thrust,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{builtin_posture, geometry_from_posture, GeometryParams};
    use crate::spatial::{euler_to_quat, rad, Vec3};
    use crate::trim::hover_trim;
    use crate::wrench::total_wrench;
    use proptest::prelude::*;

    struct Fixture {
        geo: RobotGeometry,
        posture: Posture,
        trim: Trim,
        gains: ControllerGains,
    }

    fn fixture() -> Fixture {
        let posture = builtin_posture("P1").unwrap();
        let geo = geometry_from_posture(&posture, &GeometryParams::default()).unwrap();
        let trim = hover_trim(&geo, &FanLimits::default(), true).unwrap();
        let gains = tune_gains(&geo, &trim, &TuningTarget::default());
        Fixture {
            geo,
            posture,
            trim,
            gains,
        }
    }

    fn controller(f: &Fixture, mode: ControlMode) -> AttitudeController {
        AttitudeController::new(
            f.gains.clone(),
            mode,
            EulerAngles::LEVEL,
            f.trim.foot_angle(),
            &f.posture,
            &FanLimits::default(),
        )
    }

    fn state_at(e: EulerAngles, rates: Vec3) -> RigidBodyState {
        RigidBodyState {
            orientation: euler_to_quat(&e),
            angular_velocity_body: rates,
            ..RigidBodyState::at_rest()
        }
    }

    #[test]
    fn pd_examples() {
        assert!((pd_step(2.0, 0.5, 0.1, -0.2) - 0.1).abs() < 1e-15);
        assert_eq!(pd_step(2.0, 0.5, 0.0, 0.0), 0.0);
        assert_eq!(
            pd_step(4.0, 1.0, 0.3, 0.7),
            2.0 * pd_step(2.0, 0.5, 0.3, 0.7)
        );
    }

    #[test]
    fn ramp_examples() {
        let ramp = ThrustRamp::new(48.0, 1.0, &FanLimits::default()).unwrap();
        assert_eq!(thrust_schedule(0.0, &ramp), 0.0);
        assert_eq!(thrust_schedule(0.5, &ramp), 24.0);
        assert_eq!(thrust_schedule(1.0, &ramp), 48.0);
        assert_eq!(thrust_schedule(7.0, &ramp), 48.0);
        assert!(ThrustRamp::new(55.0, 1.0, &FanLimits::default()).is_err());
        let step = ThrustRamp::new(50.0, 0.0, &FanLimits::default()).unwrap();
        assert_eq!(thrust_schedule(0.0, &step), 50.0);
    }

    #[test]
    fn mode_parsing() {
        for m in ControlMode::ALL {
            assert_eq!(m.as_str().parse::<ControlMode>().unwrap(), m);
        }
        assert!("sideways".parse::<ControlMode>().is_err());
    }

    #[test]
    fn equilibrium_passes_trim_through() {
        let f = fixture();
        let mut c = controller(&f, ControlMode::BothOn);
        let cmd = c.step(&RigidBodyState::at_rest(), 40.0, 0.004);
        assert_eq!(cmd.theta_left_cmd, f.trim.foot_angle());
        assert_eq!(cmd.theta_right_cmd, f.trim.foot_angle());
        assert_eq!(cmd.thrust_schedule_value, 40.0);
    }

    #[test]
    fn yaw_loop_opposes_yaw_error() {
        // Robot yawed positive: the commanded split must produce negative yaw torque.
        let f = fixture();
        let mut c = controller(&f, ControlMode::BothOn);
        let cmd = c.step(
            &state_at(EulerAngles::new(0.0, 0.0, rad(5.0)), Vec3::zeros()),
            0.0,
            0.004,
        );
        assert!(cmd.theta_left_cmd > cmd.theta_right_cmd);
        let fs = FanState {
            theta_left: cmd.theta_left_cmd,
            theta_right: cmd.theta_right_cmd,
            ..f.trim.fan_state
        };
        let w = total_wrench(&fs, &f.geo, 0.0);
        assert!(w.torque_world.z < 0.0);
        // Feet rotate in opposite directions about the trim angle.
        let mean = f.trim.foot_angle();
        assert!((cmd.theta_left_cmd - mean) * (cmd.theta_right_cmd - mean) < 0.0);
    }

    #[test]
    fn positive_delta_gives_positive_yaw_torque() {
        let f = fixture();
        let auth = control_authority(&f.geo, &f.trim);
        assert!(auth.yaw > 0.0);
        assert!(auth.pitch < 0.0);
    }

    #[test]
    fn pitch_loop_is_restoring() {
        // Closed-loop stiffness: d(pitch torque)/d(pitch) < 0 at trim.
        let f = fixture();
        let torque_at = |pitch: f64| {
            let mut c = controller(&f, ControlMode::PitchOnly);
            let e = EulerAngles::new(0.0, pitch, 0.0);
            let cmd = c.step_measured(&e, &Vec3::zeros(), 0.0, 1.0);
            let fs = FanState {
                theta_left: cmd.theta_left_cmd,
                theta_right: cmd.theta_right_cmd,
                ..f.trim.fan_state
            };
            generalized_wrench_3d(&fs, &f.geo, &euler_to_quat(&e))
                .torque_body
                .y
        };
        let h = 1e-4;
        let slope = (torque_at(h) - torque_at(-h)) / (2.0 * h);
        assert!(slope < 0.0, "slope {slope}");
    }

    #[test]
    fn pitch_only_keeps_feet_together_and_all_off_is_constant() {
        let f = fixture();
        let mut p = controller(&f, ControlMode::PitchOnly);
        let mut a = controller(&f, ControlMode::AllOff);
        for k in 0..50 {
            let s = state_at(
                EulerAngles::new(0.01 * k as f64, 0.02 * k as f64, -0.03 * k as f64),
                Vec3::new(0.1, -0.2, 0.3),
            );
            let cp = p.step(&s, 0.0, 0.004);
            assert_eq!(cp.theta_left_cmd, cp.theta_right_cmd);
            let ca = a.step(&s, 0.0, 0.004);
            assert_eq!(ca.theta_left_cmd, f.trim.foot_angle());
            assert_eq!(ca.theta_right_cmd, f.trim.foot_angle());
        }
    }

    #[test]
    fn tuned_gains_are_rounded_and_positive() {
        let f = fixture();
        let g = &f.gains;
        assert!(g.validate().is_ok());
        assert!(g.kp_pitch > 0.0 && g.kd_pitch > 0.0 && g.kp_yaw > 0.0 && g.kd_yaw > 0.0);
        assert_eq!(g.ki_pitch, 0.0);
        assert_eq!(round_sig(g.kp_pitch, 3), g.kp_pitch);
        assert_eq!(round_sig(0.0123456, 3), 0.0123);
        assert_eq!(round_sig(1234.5, 3), 1230.0);
    }

    proptest! {
        #[test]
        fn commands_stay_in_range_and_slew(
            steps in proptest::collection::vec(
                (-1.5f64..1.5, -1.4f64..1.4, -3.1f64..3.1, -20.0f64..20.0, -20.0f64..20.0),
                1..40),
            scale in 0.0f64..50.0,
        ) {
            let f = fixture();
            let limits = FanLimits::default();
            let mut c = AttitudeController::new(
                f.gains.scaled(scale), ControlMode::BothOn, EulerAngles::LEVEL,
                f.trim.foot_angle(), &f.posture, &limits);
            let dt = 0.004;
            let mut prev = c.last_command();
            for (r, p, y, wy, wz) in steps {
                let cmd = c.step_measured(&EulerAngles::new(r, p, y), &Vec3::new(0.0, wy, wz), 0.0, dt);
                for (now, before) in [(cmd.theta_left_cmd, prev.0), (cmd.theta_right_cmd, prev.1)] {
                    prop_assert!(now >= f.posture.foot_pitch_range.0 && now <= f.posture.foot_pitch_range.1);
                    prop_assert!((now - before).abs() <= limits.foot_pitch_rate_max * dt + 1e-12);
                }
                prev = (cmd.theta_left_cmd, cmd.theta_right_cmd);
            }
        }
    }
}
