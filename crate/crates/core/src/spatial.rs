//! Frames, rotations and quaternion kinematics.
//!
//! World frame: z up, x forward (facing direction), y left. The body frame
//! coincides with the world frame at zero attitude. All angles are radians.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;
pub type RotationMatrix = Rotation3<f64>;
pub type UnitQuat = UnitQuaternion<f64>;

/// |pitch| beyond this is treated as gimbal lock by [`quat_to_euler_checked`].
pub const GIMBAL_LOCK_MARGIN: f64 = 1e-6;

/// Z-Y-X intrinsic Euler angles (yaw, then pitch, then roll).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const LEVEL: EulerAngles = EulerAngles {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error(
    "gimbal lock: pitch {pitch} rad is within {margin} rad of +-pi/2, roll and yaw are not unique"
)]
pub struct GimbalLock {
    pub pitch: f64,
    pub margin: f64,
    /// Best-effort decomposition (roll/yaw split is arbitrary).
    pub angles: EulerAngles,
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// Right-handed rotation about the y axis.
pub fn rot_y(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    RotationMatrix::from_matrix_unchecked(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

/// Quaternion for a pure rotation about body y.
pub fn quat_pitch(theta: f64) -> UnitQuat {
    let (s, c) = (0.5 * theta).sin_cos();
    UnitQuat::new_unchecked(Quaternion::new(c, 0.0, s, 0.0))
}

/// One exponential-map step with body-frame angular velocity `omega` held
/// constant over `dt`, followed by renormalization.
pub fn quat_integrate(q: &UnitQuat, omega: &Vec3, dt: f64) -> UnitQuat {
    debug_assert!(dt > 0.0);
    let rate = omega.norm();
    let half_angle = 0.5 * rate * dt;
    let dq = if rate > 0.0 {
        let (s, c) = half_angle.sin_cos();
        let axis = omega / rate;
        Quaternion::new(c, s * axis.x, s * axis.y, s * axis.z)
    } else {
        Quaternion::identity()
    };
    UnitQuat::new_normalize(q.quaternion() * dq)
}

/// Z-Y-X decomposition. Near gimbal lock the result is still finite but the
/// roll/yaw split is arbitrary; use [`quat_to_euler_checked`] to detect it.
pub fn quat_to_euler(q: &UnitQuat) -> EulerAngles {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let r32 = 2.0 * (y * z + w * x);
    let r33 = 1.0 - 2.0 * (x * x + y * y);
    let r31 = 2.0 * (x * z - w * y);
    let r21 = 2.0 * (x * y + w * z);
    let r11 = 1.0 - 2.0 * (y * y + z * z);
    let pitch = (-r31).atan2((r32 * r32 + r33 * r33).sqrt());
    EulerAngles {
        roll: wrap_angle(r32.atan2(r33)),
        pitch,
        yaw: wrap_angle(r21.atan2(r11)),
    }
}

pub fn quat_to_euler_checked(q: &UnitQuat) -> Result<EulerAngles, GimbalLock> {
    let angles = quat_to_euler(q);
    if angles.pitch.abs() > PI / 2.0 - GIMBAL_LOCK_MARGIN {
        Err(GimbalLock {
            pitch: angles.pitch,
            margin: GIMBAL_LOCK_MARGIN,
            angles,
        })
    } else {
        Ok(angles)
    }
}

pub fn euler_to_quat(e: &EulerAngles) -> UnitQuat {
    let (sr, cr) = (0.5 * e.roll).sin_cos();
    let (sp, cp) = (0.5 * e.pitch).sin_cos();
    let (sy, cy) = (0.5 * e.yaw).sin_cos();
    UnitQuat::new_normalize(Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_mat_eq(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol, "{a} != {b}");
        }
    }

    #[test]
    fn rot_y_examples() {
        assert_eq!(rot_y(0.0).into_inner(), Matrix3::identity());
        let v = rot_y(PI / 2.0) * Vec3::z();
        assert_relative_eq!(v, Vec3::x(), epsilon = 1e-12);
        let m = rot_y(0.3) * rot_y(-0.3);
        assert_mat_eq(m.matrix(), &Matrix3::identity(), 1e-12);
    }

    #[test]
    fn rot_y_is_orthonormal() {
        for k in -20..=20 {
            let r = rot_y(0.37 * k as f64);
            let m = r.matrix();
            assert_mat_eq(&(m.transpose() * m), &Matrix3::identity(), 1e-9);
            assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quat_pitch_matches_rot_y() {
        for k in -10..=10 {
            let t = 0.15 * k as f64;
            assert_mat_eq(
                quat_pitch(t).to_rotation_matrix().matrix(),
                rot_y(t).matrix(),
                1e-15,
            );
        }
    }

    #[test]
    fn zero_rate_keeps_identity() {
        let q = quat_integrate(&UnitQuat::identity(), &Vec3::zeros(), 1e-3);
        assert_eq!(q, UnitQuat::identity());
    }

    #[test]
    fn constant_rate_matches_axis_angle() {
        let omega = Vec3::new(0.0, PI, 0.0);
        let mut q = UnitQuat::identity();
        for _ in 0..1000 {
            q = quat_integrate(&q, &omega, 1e-3);
        }
        let expected = UnitQuat::from_axis_angle(&Vec3::y_axis(), PI);
        assert!(q.angle_to(&expected) < 1e-4);
    }

    #[test]
    fn integrate_matches_rotation_composition() {
        let omega = Vec3::new(0.3, -1.2, 0.7);
        let dt = 1e-3;
        let q0 = euler_to_quat(&EulerAngles::new(0.1, 0.2, -0.4));
        let q1 = quat_integrate(&q0, &omega, dt);
        let r = q0.to_rotation_matrix() * Rotation3::new(omega * dt);
        assert!(q1.to_rotation_matrix().angle_to(&r) < dt * dt);
    }

    #[test]
    fn integrated_norm_is_unit_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut q = UnitQuat::identity();
        for _ in 0..1_000_000 {
            let omega = Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            let dt = rng.random_range(1e-5..1e-2);
            q = quat_integrate(&q, &omega, dt);
            assert!((q.quaternion().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_single_axis_cases() {
        assert_eq!(quat_to_euler(&UnitQuat::identity()), EulerAngles::LEVEL);
        let e = quat_to_euler(&quat_pitch(0.2));
        assert!((e.pitch - 0.2).abs() < 1e-12);
        assert!(e.roll.abs() < 1e-12 && e.yaw.abs() < 1e-12);
    }

    #[test]
    fn gimbal_lock_is_flagged() {
        let q = quat_pitch(PI / 2.0);
        assert!(quat_to_euler_checked(&q).is_err());
        assert!(quat_to_euler_checked(&quat_pitch(1.5)).is_ok());
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let e = EulerAngles::new(
                rng.random_range(-PI..PI),
                rng.random_range(-(PI / 2.0 - 1e-3)..(PI / 2.0 - 1e-3)),
                rng.random_range(-PI..PI),
            );
            let back = quat_to_euler(&euler_to_quat(&e));
            worst = worst
                .max(wrap_angle(back.roll - e.roll).abs())
                .max((back.pitch - e.pitch).abs())
                .max(wrap_angle(back.yaw - e.yaw).abs());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    proptest! {
        #[test]
        fn rot_y_composes_additively(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let lhs = rot_y(a) * rot_y(b);
            let rhs = rot_y(a + b);
            for (x, y) in lhs.matrix().iter().zip(rhs.matrix().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn wrap_stays_in_half_open_interval(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-9
                || (1.0 - ((a - w) / (2.0 * PI)).fract().abs()) < 1e-9);
        }
    }
}
