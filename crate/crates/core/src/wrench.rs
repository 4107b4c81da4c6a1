//! Net force and torque produced by the four ducted fans.
//!
//! Waist fans push along body +z. Each foot fan is pitched about body y by its
//! foot angle, so theta = 0 is thrust-up and its thrust direction in the body
//! frame is `(sin theta, 0, cos theta)`. Torques are taken about the CoM;
//! gravity acts at the CoM and contributes none.

use crate::robot::{Fan, FanLimits, RobotGeometry};
use crate::spatial::{rot_y, UnitQuat, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FanState {
    pub f_front: f64,
    pub f_back: f64,
    pub f_left: f64,
    pub f_right: f64,
    /// Foot fan pitch angles, radians.
    pub theta_left: f64,
    pub theta_right: f64,
}

impl FanState {
    /// All four fans at `thrust`, both feet at `theta`.
    pub fn uniform(thrust: f64, theta: f64) -> Self {
        Self {
            f_front: thrust,
            f_back: thrust,
            f_left: thrust,
            f_right: thrust,
            theta_left: theta,
            theta_right: theta,
        }
    }

    pub fn thrust(&self, fan: Fan) -> f64 {
        match fan {
            Fan::Front => self.f_front,
            Fan::Back => self.f_back,
            Fan::Left => self.f_left,
            Fan::Right => self.f_right,
        }
    }

    pub fn thrusts(&self) -> [f64; 4] {
        [self.f_front, self.f_back, self.f_left, self.f_right]
    }

    /// Unit thrust axis of `fan` in the body frame.
    pub fn axis_body(&self, fan: Fan) -> Vec3 {
        let foot = |theta: f64| {
            let (s, c) = theta.sin_cos();
            Vec3::new(s, 0.0, c)
        };
        match fan {
            Fan::Front | Fan::Back => Vec3::z(),
            Fan::Left => foot(self.theta_left),
            Fan::Right => foot(self.theta_right),
        }
    }

    pub fn within_limits(&self, limits: &FanLimits) -> bool {
        self.thrusts()
            .iter()
            .all(|f| *f >= limits.thrust_min && *f <= limits.thrust_max_per_fan)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            f_front: k * self.f_front,
            f_back: k * self.f_back,
            f_left: k * self.f_left,
            f_right: k * self.f_right,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    /// Net world-frame force including gravity.
    pub force_world: Vec3,
    /// Net world-frame torque about the CoM.
    pub torque_world: Vec3,
    /// The same torque in the body frame.
    pub torque_body: Vec3,
    /// Pitch torque from the waist thrust differential.
    pub t_y1: f64,
    /// Pitch torque from the foot fans' x offset to the CoM.
    pub t_y2: f64,
    /// Pitch torque from the foot fans' horizontal thrust over the z lever.
    pub t_y3: f64,
}

impl Wrench {
    pub fn pitch_torque(&self) -> f64 {
        self.t_y1 + self.t_y2 + self.t_y3
    }

    /// Euclidean norm of the six force/torque components.
    pub fn norm(&self) -> f64 {
        (self.force_world.norm_squared() + self.torque_world.norm_squared()).sqrt()
    }
}

/// Body-frame thrust sum `[Fx, 0, Fz]` of the sagittal model.
fn sagittal_thrust_body(fs: &FanState) -> Vec3 {
    let (sl, cl) = fs.theta_left.sin_cos();
    let (sr, cr) = fs.theta_right.sin_cos();
    Vec3::new(
        fs.f_left * sl + fs.f_right * sr,
        0.0,
        fs.f_back + fs.f_front + fs.f_left * cl + fs.f_right * cr,
    )
}

/// World-frame net force for a pure pitch attitude.
pub fn force_world(fs: &FanState, geo: &RobotGeometry, theta_pitch: f64) -> Vec3 {
    rot_y(theta_pitch) * sagittal_thrust_body(fs) - Vec3::new(0.0, 0.0, geo.weight())
}

/// Pitch torque split into waist differential, foot x offset and foot
/// horizontal-thrust terms.
pub fn pitch_torque_terms(fs: &FanState, geo: &RobotGeometry) -> (f64, f64, f64) {
    let half_l = 0.5 * geo.fan_spacing_waist;
    let x_c = geo.com_body.x;
    let z_c = geo.com_body.z;
    let (sl, cl) = fs.theta_left.sin_cos();
    let (sr, cr) = fs.theta_right.sin_cos();
    let t_y1 = fs.f_back * (half_l + x_c) - fs.f_front * (half_l - x_c);
    let t_y2 = (fs.f_left * cl + fs.f_right * cr) * (x_c - geo.fan_foot_x);
    let t_y3 = -(fs.f_left * sl + fs.f_right * sr) * (z_c - geo.fan_foot_z);
    (t_y1, t_y2, t_y3)
}

/// Closed-form sagittal wrench for a pure pitch attitude. Assumes y_c = 0;
/// use [`generalized_wrench_3d`] otherwise.
pub fn total_wrench(fs: &FanState, geo: &RobotGeometry, theta_pitch: f64) -> Wrench {
    let (t_y1, t_y2, t_y3) = pitch_torque_terms(fs, geo);
    let half_lf = 0.5 * geo.fan_spacing_feet;
    let (sl, cl) = fs.theta_left.sin_cos();
    let (sr, cr) = fs.theta_right.sin_cos();
    let torque_body = Vec3::new(
        half_lf * (fs.f_left * cl - fs.f_right * cr),
        t_y1 + t_y2 + t_y3,
        half_lf * (fs.f_right * sr - fs.f_left * sl),
    );
    Wrench {
        force_world: force_world(fs, geo, theta_pitch),
        torque_world: rot_y(theta_pitch) * torque_body,
        torque_body,
        t_y1,
        t_y2,
        t_y3,
    }
}

/// Wrench under an arbitrary attitude: each fan is a point force along its
/// axis at its mount, rotated by the full orientation.
pub fn generalized_wrench_3d(fs: &FanState, geo: &RobotGeometry, orientation: &UnitQuat) -> Wrench {
    let mut force_body = Vec3::zeros();
    let mut torque_body = Vec3::zeros();
    for fan in Fan::ALL {
        let f = fs.thrust(fan) * fs.axis_body(fan);
        force_body += f;
        torque_body += (geo.fan_position(fan) - geo.com_body).cross(&f);
    }
    let (t_y1, t_y2, t_y3) = pitch_torque_terms(fs, geo);
    Wrench {
        force_world: orientation * force_body - Vec3::new(0.0, 0.0, geo.weight()),
        torque_world: orientation * torque_body,
        torque_body,
        t_y1,
        t_y2,
        t_y3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{builtin_posture, geometry_from_posture, GeometryParams};
    use crate::spatial::{quat_pitch, rad};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p1() -> RobotGeometry {
        geometry_from_posture(&builtin_posture("P1").unwrap(), &GeometryParams::default()).unwrap()
    }

    fn symmetric() -> RobotGeometry {
        let mut g = p1();
        g.com_body.x = 0.0;
        g.fan_foot_x = 0.0;
        g
    }

    #[test]
    fn hover_balance_force() {
        let geo = p1();
        let f = force_world(&FanState::uniform(17.0 * 9.81 / 4.0, 0.0), &geo, 0.0);
        assert!(f.norm() < 1e-12, "{f}");
    }

    #[test]
    fn full_thrust_force() {
        let f = force_world(&FanState::uniform(50.0, 0.0), &p1(), 0.0);
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, 200.0 - 166.77), epsilon = 1e-12);
    }

    #[test]
    fn horizontal_feet_give_no_lift() {
        let fs = FanState {
            f_left: 50.0,
            f_right: 50.0,
            theta_left: rad(90.0),
            theta_right: rad(90.0),
            ..Default::default()
        };
        let f = force_world(&fs, &p1(), 0.0);
        assert_relative_eq!(f, Vec3::new(100.0, 0.0, -166.77), epsilon = 1e-12);
    }

    #[test]
    fn waist_term_independent_of_spacing() {
        let fs = FanState {
            f_front: 50.0,
            f_back: 50.0,
            ..Default::default()
        };
        let mut geo = p1();
        for l in [0.1, 0.3, 0.9] {
            geo.fan_spacing_waist = l;
            let (t1, _, _) = pitch_torque_terms(&fs, &geo);
            assert_relative_eq!(t1, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn foot_horizontal_term() {
        let fs = FanState {
            f_left: 40.0,
            f_right: 40.0,
            theta_left: rad(10.0),
            theta_right: rad(10.0),
            ..Default::default()
        };
        let (_, _, t3) = pitch_torque_terms(&fs, &p1());
        assert_relative_eq!(t3, -80.0 * rad(10.0).sin() * 0.367, epsilon = 1e-12);
        assert!((t3 - -5.098).abs() < 5e-4);
    }

    #[test]
    fn zero_x_lever_cancels_foot_vertical_term() {
        let mut geo = p1();
        geo.fan_foot_x = geo.com_body.x;
        let fs = FanState {
            f_left: 33.0,
            f_right: 33.0,
            ..Default::default()
        };
        assert_eq!(pitch_torque_terms(&fs, &geo).1, 0.0);
    }

    #[test]
    fn symmetric_state_has_no_roll_or_yaw() {
        let w = total_wrench(&FanState::uniform(37.0, 0.4), &symmetric(), 0.1);
        assert_eq!(w.torque_body.x, 0.0);
        assert_eq!(w.torque_body.z, 0.0);
    }

    #[test]
    fn differential_feet_yaw() {
        let fs = FanState {
            f_left: 40.0,
            f_right: 40.0,
            theta_left: rad(10.0),
            theta_right: rad(-10.0),
            ..Default::default()
        };
        let w = total_wrench(&fs, &p1(), 0.0);
        let expected = 0.5 * 0.25 * (40.0 * rad(-10.0).sin() - 40.0 * rad(10.0).sin());
        assert_relative_eq!(w.torque_world.z, expected, epsilon = 1e-12);
        assert!((w.torque_world.z - -1.736).abs() < 5e-4);
    }

    #[test]
    fn single_foot_stays_under_ankle_rating() {
        let fs = FanState {
            f_left: 50.0,
            theta_left: rad(30.0),
            ..Default::default()
        };
        let (_, _, t3) = pitch_torque_terms(&fs, &p1());
        assert_relative_eq!(t3.abs(), 50.0 * 0.5 * 0.367, epsilon = 1e-12);
        assert!(t3.abs() <= 24.0);
    }

    #[test]
    fn reduction_to_pitch_only_model() {
        let geo = p1();
        let fs = FanState {
            f_front: 12.0,
            f_back: 44.0,
            f_left: 31.0,
            f_right: 18.5,
            theta_left: 0.4,
            theta_right: -0.9,
        };
        for k in -6..=6 {
            let th = 0.2 * k as f64;
            let a = total_wrench(&fs, &geo, th);
            let b = generalized_wrench_3d(&fs, &geo, &quat_pitch(th));
            assert!((a.force_world - b.force_world).norm() < 1e-12);
            assert!((a.torque_world - b.torque_world).norm() < 1e-12);
        }
    }

    #[test]
    fn hover_is_zero_wrench_in_3d() {
        let w = generalized_wrench_3d(
            &FanState::uniform(17.0 * 9.81 / 4.0, 0.0),
            &symmetric(),
            &UnitQuat::identity(),
        );
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn vertical_force_finite_difference() {
        let geo = p1();
        let base = FanState {
            f_front: 20.0,
            f_back: 30.0,
            f_left: 25.0,
            f_right: 35.0,
            theta_left: 0.3,
            theta_right: -0.2,
        };
        let h = 1e-3;
        let fz = |fs: &FanState| force_world(fs, &geo, 0.0).z;
        let d = |bump: fn(&mut FanState, f64)| {
            let mut up = base;
            bump(&mut up, h);
            let mut dn = base;
            bump(&mut dn, -h);
            (fz(&up) - fz(&dn)) / (2.0 * h)
        };
        assert_relative_eq!(d(|s, h| s.f_front += h), 1.0, epsilon = 1e-9);
        assert_relative_eq!(d(|s, h| s.f_back += h), 1.0, epsilon = 1e-9);
        assert_relative_eq!(d(|s, h| s.f_left += h), 0.3f64.cos(), epsilon = 1e-9);
        assert_relative_eq!(d(|s, h| s.f_right += h), (-0.2f64).cos(), epsilon = 1e-9);
    }

    #[test]
    fn t_y3_sensitivity_to_com_height() {
        let fs = FanState {
            f_left: 22.0,
            f_right: 41.0,
            theta_left: 0.25,
            theta_right: 0.6,
            ..Default::default()
        };
        let mut geo = p1();
        let h = 1e-4;
        geo.com_body.z += h;
        let up = pitch_torque_terms(&fs, &geo).2;
        geo.com_body.z -= 2.0 * h;
        let dn = pitch_torque_terms(&fs, &geo).2;
        let expected = -(22.0 * 0.25f64.sin() + 41.0 * 0.6f64.sin());
        assert_relative_eq!((up - dn) / (2.0 * h), expected, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn wrench_is_homogeneous_in_thrust(
            f in proptest::array::uniform4(0.0f64..50.0),
            tl in -1.5f64..1.5, tr in -1.5f64..1.5,
            pitch in -0.8f64..0.8, k in 0.0f64..3.0,
        ) {
            let geo = p1();
            let fs = FanState { f_front: f[0], f_back: f[1], f_left: f[2], f_right: f[3],
                theta_left: tl, theta_right: tr };
            let w1 = total_wrench(&fs, &geo, pitch);
            let wk = total_wrench(&fs.scaled(k), &geo, pitch);
            let g = Vec3::new(0.0, 0.0, geo.weight());
            prop_assert!(((wk.force_world + g) - k * (w1.force_world + g)).norm() < 1e-9);
            prop_assert!((wk.torque_world - k * w1.torque_world).norm() < 1e-9);
        }
    }
}
