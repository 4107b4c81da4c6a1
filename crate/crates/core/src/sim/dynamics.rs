use crate::robot::RobotGeometry;
use crate::spatial::{quat_integrate, UnitQuat, Vec3};
use crate::wrench::{generalized_wrench_3d, FanState};
use nalgebra::{Matrix3, Quaternion};
use serde::{Deserialize, Serialize};

pub const POSITION_LIMIT: f64 = 100.0;
pub const ANGULAR_RATE_LIMIT: f64 = 100.0;
pub const MAX_DT: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position_world: Vec3,
    pub velocity_world: Vec3,
    pub orientation: UnitQuat,
    pub angular_velocity_body: Vec3,
    pub time: f64,
}

impl RigidBodyState {
    pub fn at_rest() -> Self {
        Self {
            position_world: Vec3::zeros(),
            velocity_world: Vec3::zeros(),
            orientation: UnitQuat::identity(),
            angular_velocity_body: Vec3::zeros(),
            time: 0.0,
        }
    }

    pub fn kinetic_energy(&self, geo: &RobotGeometry) -> f64 {
        let w = &self.angular_velocity_body;
        0.5 * geo.mass_total * self.velocity_world.norm_squared()
            + 0.5 * w.dot(&(geo.inertia_body * w))
    }

    /// Angular momentum about the CoM, body frame.
    pub fn angular_momentum_body(&self, geo: &RobotGeometry) -> Vec3 {
        geo.inertia_body * self.angular_velocity_body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Integrator {
    /// Constant-acceleration translation over the step, RK4 on the Euler
    /// equations (body torque is constant over a step), and an exponential-map
    /// attitude update with the mean body rate.
    #[default]
    SemiImplicit,
    /// Classical RK4 on the full coupled state.
    Rk4,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulation diverged at t = {time:.4} s: |position| = {position_norm:.3e} m, |omega| = {rate_norm:.3e} rad/s")]
pub struct Diverged {
    pub time: f64,
    pub position_norm: f64,
    pub rate_norm: f64,
    /// Last state that passed the guard.
    pub last_good: Box<RigidBodyState>,
}

fn euler_rate(inertia: &Matrix3<f64>, inertia_inv: &Matrix3<f64>, torque: &Vec3, w: &Vec3) -> Vec3 {
    inertia_inv * (torque - w.cross(&(inertia * w)))
}

fn inverse_inertia(geo: &RobotGeometry) -> Matrix3<f64> {
    geo.inertia_body
        .try_inverse()
        .expect("validated inertia is invertible")
}

fn semi_implicit(
    state: &RigidBodyState,
    fs: &FanState,
    geo: &RobotGeometry,
    dt: f64,
) -> RigidBodyState {
    let w = generalized_wrench_3d(fs, geo, &state.orientation);
    let accel = w.force_world / geo.mass_total;
    let inertia = &geo.inertia_body;
    let inv = inverse_inertia(geo);
    let tau = w.torque_body;
    let f = |omega: &Vec3| euler_rate(inertia, &inv, &tau, omega);
    let w0 = state.angular_velocity_body;
    let k1 = f(&w0);
    let k2 = f(&(w0 + 0.5 * dt * k1));
    let k3 = f(&(w0 + 0.5 * dt * k2));
    let k4 = f(&(w0 + dt * k3));
    let w1 = w0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let v0 = state.velocity_world;
    RigidBodyState {
        position_world: state.position_world + v0 * dt + 0.5 * accel * dt * dt,
        velocity_world: v0 + accel * dt,
        orientation: quat_integrate(&state.orientation, &(0.5 * (w0 + w1)), dt),
        angular_velocity_body: w1,
        time: state.time + dt,
    }
}

#[derive(Clone, Copy)]
struct Deriv {
    p: Vec3,
    v: Vec3,
    q: Quaternion<f64>,
    w: Vec3,
}

fn rk4(state: &RigidBodyState, fs: &FanState, geo: &RobotGeometry, dt: f64) -> RigidBodyState {
    let inv = inverse_inertia(geo);
    let tau = generalized_wrench_3d(fs, geo, &state.orientation).torque_body;
    let deriv = |v: &Vec3, q: &Quaternion<f64>, w: &Vec3| {
        let unit = UnitQuat::new_normalize(*q);
        let force = generalized_wrench_3d(fs, geo, &unit).force_world;
        Deriv {
            p: *v,
            v: force / geo.mass_total,
            q: q * Quaternion::from_imag(*w) * 0.5,
            w: euler_rate(&geo.inertia_body, &inv, &tau, w),
        }
    };
    let q0 = *state.orientation.quaternion();
    let (v0, w0) = (state.velocity_world, state.angular_velocity_body);
    let k1 = deriv(&v0, &q0, &w0);
    let k2 = deriv(
        &(v0 + 0.5 * dt * k1.v),
        &(q0 + k1.q * (0.5 * dt)),
        &(w0 + 0.5 * dt * k1.w),
    );
    let k3 = deriv(
        &(v0 + 0.5 * dt * k2.v),
        &(q0 + k2.q * (0.5 * dt)),
        &(w0 + 0.5 * dt * k2.w),
    );
    let k4 = deriv(&(v0 + dt * k3.v), &(q0 + k3.q * dt), &(w0 + dt * k3.w));
    let s = dt / 6.0;
    RigidBodyState {
        position_world: state.position_world + s * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
        velocity_world: v0 + s * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        orientation: UnitQuat::new_normalize(q0 + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * s),
        angular_velocity_body: w0 + s * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
        time: state.time + dt,
    }
}

/// Advances the free body by `dt` with the fan state held constant, using the
/// default integrator.
pub fn dynamics_step(
    state: &RigidBodyState,
    fs: &FanState,
    geo: &RobotGeometry,
    dt: f64,
) -> Result<RigidBodyState, Diverged> {
    dynamics_step_with(state, fs, geo, dt, Integrator::SemiImplicit)
}

pub fn dynamics_step_with(
    state: &RigidBodyState,
    fs: &FanState,
    geo: &RobotGeometry,
    dt: f64,
    integrator: Integrator,
) -> Result<RigidBodyState, Diverged> {
    debug_assert!(dt > 0.0 && dt <= MAX_DT);
    let next = match integrator {
        Integrator::SemiImplicit => semi_implicit(state, fs, geo, dt),
        Integrator::Rk4 => rk4(state, fs, geo, dt),
    };
    let position_norm = next.position_world.norm();
    let rate_norm = next.angular_velocity_body.norm();
    // Negated comparisons also catch NaN.
    if !(position_norm <= POSITION_LIMIT) || !(rate_norm <= ANGULAR_RATE_LIMIT) {
        return Err(Diverged {
            time: next.time,
            position_norm,
            rate_norm,
            last_good: Box::new(state.clone()),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{builtin_posture, geometry_from_posture, GeometryParams, GRAVITY};
    use crate::spatial::rad;

    fn geo() -> RobotGeometry {
        geometry_from_posture(&builtin_posture("P1").unwrap(), &GeometryParams::default()).unwrap()
    }

    fn run(
        mut s: RigidBodyState,
        fs: &FanState,
        g: &RobotGeometry,
        dt: f64,
        t_end: f64,
        integrator: Integrator,
    ) -> RigidBodyState {
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            s = dynamics_step_with(&s, fs, g, dt, integrator).unwrap();
        }
        s
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let g = geo();
        for integrator in [Integrator::SemiImplicit, Integrator::Rk4] {
            let s = run(
                RigidBodyState::at_rest(),
                &FanState::default(),
                &g,
                1e-3,
                1.0,
                integrator,
            );
            assert!(
                (s.position_world.z + 0.5 * GRAVITY).abs() < 1e-6,
                "{integrator:?}"
            );
            assert!((s.velocity_world.z + GRAVITY).abs() < 1e-9);
            assert!((s.time - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_hover_is_stationary() {
        let mut g = geo();
        g.com_body.x = 0.0;
        g.fan_foot_x = 0.0;
        let fs = FanState::uniform(g.weight() / 4.0, 0.0);
        let s = run(
            RigidBodyState::at_rest(),
            &fs,
            &g,
            1e-3,
            1.0,
            Integrator::SemiImplicit,
        );
        assert!(s.position_world.norm() < 1e-9);
        assert!(s.velocity_world.norm() < 1e-9);
        assert!(s.angular_velocity_body.norm() < 1e-9);
        assert!(s.orientation.angle() < 1e-9);
    }

    #[test]
    fn torque_free_tumble_conserves_energy_and_momentum() {
        let mut g = geo();
        g.inertia_body = Matrix3::from_diagonal(&Vec3::new(0.2, 0.35, 0.05));
        let s0 = RigidBodyState {
            angular_velocity_body: Vec3::new(1.0, 3.0, -2.0),
            ..RigidBodyState::at_rest()
        };
        for integrator in [Integrator::SemiImplicit, Integrator::Rk4] {
            let s1 = run(s0.clone(), &FanState::default(), &g, 1e-3, 1.0, integrator);
            let ke0 = 0.5
                * s0.angular_velocity_body
                    .dot(&(g.inertia_body * s0.angular_velocity_body));
            let ke1 = 0.5
                * s1.angular_velocity_body
                    .dot(&(g.inertia_body * s1.angular_velocity_body));
            let l0 = s0.angular_momentum_body(&g).norm();
            let l1 = s1.angular_momentum_body(&g).norm();
            assert!(((ke1 - ke0) / ke0).abs() < 1e-5, "{integrator:?}");
            assert!(((l1 - l0) / l0).abs() < 1e-5, "{integrator:?}");
            // World-frame momentum direction is fixed too.
            let lw0 = s0.orientation * s0.angular_momentum_body(&g);
            let lw1 = s1.orientation * s1.angular_momentum_body(&g);
            assert!((lw1 - lw0).norm() / l0 < 1e-4, "{integrator:?}");
        }
    }

    #[test]
    fn quaternion_norm_stays_unit_each_step() {
        let g = geo();
        let fs = FanState {
            theta_left: rad(20.0),
            theta_right: rad(-10.0),
            ..FanState::uniform(45.0, 0.0)
        };
        let mut s = RigidBodyState {
            angular_velocity_body: Vec3::new(0.5, -1.0, 2.0),
            ..RigidBodyState::at_rest()
        };
        for _ in 0..1000 {
            s = dynamics_step(&s, &fs, &g, 1e-3).unwrap();
            assert!((s.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    /// Differences between successive halvings of dt shrink, and the gap
    /// scales no worse than linearly.
    #[test]
    fn halving_dt_converges_at_least_first_order() {
        let g = geo();
        let fs = FanState {
            theta_left: rad(25.0),
            theta_right: rad(15.0),
            ..FanState::uniform(46.0, 0.0)
        };
        let s0 = RigidBodyState {
            angular_velocity_body: Vec3::new(0.2, 0.4, -0.3),
            ..RigidBodyState::at_rest()
        };
        let flat = |s: &RigidBodyState| {
            let q = s.orientation.quaternion();
            let v = [
                s.position_world.as_slice(),
                s.velocity_world.as_slice(),
                s.angular_velocity_body.as_slice(),
                &[q.w, q.i, q.j, q.k],
            ]
            .concat();
            nalgebra::DVector::from_vec(v)
        };
        let finals: Vec<_> = [2e-3, 1e-3, 5e-4]
            .iter()
            .map(|dt| {
                flat(&run(
                    s0.clone(),
                    &fs,
                    &g,
                    *dt,
                    0.5,
                    Integrator::SemiImplicit,
                ))
            })
            .collect();
        let d1 = (&finals[0] - &finals[1]).norm();
        let d2 = (&finals[1] - &finals[2]).norm();
        assert!(d1 < 2e-3 * 10.0, "d1 = {d1}");
        assert!(d2 <= 0.6 * d1, "d1 = {d1}, d2 = {d2}");
    }

    /// Energy audit: work done by thrust equals the change of kinetic plus
    /// potential energy.
    #[test]
    fn energy_balances_thrust_work() {
        let g = geo();
        let fs = FanState {
            theta_left: rad(12.0),
            theta_right: rad(4.0),
            ..FanState::uniform(47.0, 0.0)
        };
        let dt = 1e-4;
        let mut s = RigidBodyState {
            angular_velocity_body: Vec3::new(0.1, -0.3, 0.2),
            velocity_world: Vec3::new(0.2, 0.0, 0.5),
            ..RigidBodyState::at_rest()
        };
        let energy = |s: &RigidBodyState| s.kinetic_energy(&g) + g.weight() * s.position_world.z;
        let power = |s: &RigidBodyState| {
            let w = generalized_wrench_3d(&fs, &g, &s.orientation);
            let thrust = w.force_world + Vec3::new(0.0, 0.0, g.weight());
            thrust.dot(&s.velocity_world) + w.torque_body.dot(&s.angular_velocity_body)
        };
        let e0 = energy(&s);
        let mut work = 0.0;
        for _ in 0..5000 {
            let next = dynamics_step(&s, &fs, &g, dt).unwrap();
            work += 0.5 * dt * (power(&s) + power(&next));
            s = next;
        }
        let de = energy(&s) - e0;
        assert!(((de - work) / work).abs() < 1e-3, "dE = {de}, W = {work}");
    }

    #[test]
    fn divergence_guard_trips() {
        let g = geo();
        let s = RigidBodyState {
            angular_velocity_body: Vec3::new(0.0, 0.0, 150.0),
            ..RigidBodyState::at_rest()
        };
        let err = dynamics_step(&s, &FanState::default(), &g, 1e-3).unwrap_err();
        assert!(err.rate_norm > ANGULAR_RATE_LIMIT);
        let far = RigidBodyState {
            position_world: Vec3::new(0.0, 0.0, -100.0),
            ..RigidBodyState::at_rest()
        };
        assert!(dynamics_step(&far, &FanState::default(), &g, 1e-3).is_err());
    }
}
