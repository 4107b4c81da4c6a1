//! Hover trim: fan state and body pitch with zero net wrench.

use crate::robot::{FanLimits, RobotGeometry};
use crate::spatial::quat_pitch;
use crate::wrench::{generalized_wrench_3d, FanState, Wrench};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const RESIDUAL_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrimError {
    #[error("no trim found: {reason} (residual wrench norm {residual:.3e})")]
    NoTrimFound { reason: String, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trim {
    pub fan_state: FanState,
    pub theta_pitch: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl Trim {
    /// Common foot angle (mean of both feet).
    pub fn foot_angle(&self) -> f64 {
        0.5 * (self.fan_state.theta_left + self.fan_state.theta_right)
    }
}

fn trim_wrench(fs: &FanState, geo: &RobotGeometry, theta_pitch: f64) -> Wrench {
    generalized_wrench_3d(fs, geo, &quat_pitch(theta_pitch))
}

/// Unknowns are (thrust per fan, common foot angle, body pitch).
fn equal_state(u: &Vector3<f64>) -> FanState {
    FanState::uniform(u[0], u[1])
}

fn equal_residual(geo: &RobotGeometry, u: &Vector3<f64>) -> Vector3<f64> {
    let w = trim_wrench(&equal_state(u), geo, u[2]);
    Vector3::new(w.force_world.x, w.force_world.z, w.torque_world.y)
}

fn equal_thrust_newton(geo: &RobotGeometry) -> Result<(Vector3<f64>, usize), TrimError> {
    let weight = geo.weight();
    let mut u = Vector3::new(0.25 * weight, 0.0, 0.0);
    let mut r = equal_residual(geo, &u);
    // Residual scale: forces ~ weight, torques ~ weight * metres.
    let tol = 1e-13 * weight;
    let mut iters = 0;
    while r.norm() > tol && iters < MAX_ITERS {
        iters += 1;
        let mut jac = Matrix3::zeros();
        let steps = [1e-6 * weight, 1e-7, 1e-7];
        for k in 0..3 {
            let mut up = u;
            up[k] += steps[k];
            let mut dn = u;
            dn[k] -= steps[k];
            let col = (equal_residual(geo, &up) - equal_residual(geo, &dn)) / (2.0 * steps[k]);
            jac.set_column(k, &col);
        }
        let Some(delta) = jac.lu().solve(&(-r)) else {
            return Err(TrimError::NoTrimFound {
                reason: "singular Jacobian".into(),
                residual: r.norm(),
            });
        };
        // Backtracking on the residual norm.
        let mut alpha = 1.0;
        loop {
            let cand = u + alpha * delta;
            let rc = equal_residual(geo, &cand);
            if rc.norm() < r.norm() || alpha < 1e-6 {
                u = cand;
                r = rc;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok((u, iters))
}

/// Thrust-up feet at level attitude. Force and pitch balance leave the
/// common foot thrust free; it is chosen to minimise the largest fan thrust.
fn differential_state(geo: &RobotGeometry) -> FanState {
    let weight = geo.weight();
    let l = geo.fan_spacing_waist;
    let x_c = geo.com_body.x;
    let lever = geo.com_body.x - geo.fan_foot_x;
    // Each thrust is affine in the foot thrust f: value = k0 + k1 * f.
    let back = |f: f64| ((weight - 2.0 * f) * (0.5 * l - x_c) - 2.0 * f * lever) / l;
    let front = |f: f64| weight - 2.0 * f - back(f);
    let foot = |f: f64| f;
    let lines: [&dyn Fn(f64) -> f64; 3] = [&front, &back, &foot];
    let upper = 0.5 * weight;
    let mut candidates = vec![0.0, upper];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let (a0, a1) = (lines[i](0.0), lines[i](1.0) - lines[i](0.0));
            let (b0, b1) = (lines[j](0.0), lines[j](1.0) - lines[j](0.0));
            if (a1 - b1).abs() > 1e-12 {
                let f = (b0 - a0) / (a1 - b1);
                if (0.0..=upper).contains(&f) {
                    candidates.push(f);
                }
            }
        }
    }
    let peak = |f: f64| front(f).max(back(f)).max(f);
    let f = candidates
        .into_iter()
        .min_by(|a, b| peak(*a).total_cmp(&peak(*b)))
        .unwrap_or(0.25 * weight);
    FanState {
        f_front: front(f),
        f_back: back(f),
        f_left: f,
        f_right: f,
        theta_left: 0.0,
        theta_right: 0.0,
    }
}

/// Finds a zero-wrench state.
///
/// With `equal_thrust`, all four fans share one thrust and both feet one
/// angle, and the solver adjusts (thrust, foot angle, body pitch). Otherwise
/// the feet stay thrust-up at level attitude and the waist pair is split
/// differentially.
pub fn hover_trim(
    geo: &RobotGeometry,
    limits: &FanLimits,
    equal_thrust: bool,
) -> Result<Trim, TrimError> {
    let (fan_state, theta_pitch, iterations) = if equal_thrust {
        let (u, iters) = equal_thrust_newton(geo)?;
        (equal_state(&u), u[2], iters)
    } else {
        (differential_state(geo), 0.0, 0)
    };
    let residual = trim_wrench(&fan_state, geo, theta_pitch).norm();
    let fail = |reason: String| TrimError::NoTrimFound { reason, residual };
    if !(residual < RESIDUAL_TOL) {
        return Err(fail("solver did not converge".into()));
    }
    if !fan_state.within_limits(limits) {
        return Err(fail(format!(
            "required thrusts {:?} N exceed the per-fan range [{}, {}] N",
            fan_state.thrusts(),
            limits.thrust_min,
            limits.thrust_max_per_fan
        )));
    }
    if fan_state.theta_left.abs() > FRAC_PI_2 || theta_pitch.abs() > FRAC_PI_2 {
        return Err(fail("trim angles outside +-90 deg".into()));
    }
    Ok(Trim {
        fan_state,
        theta_pitch,
        residual_norm: residual,
        iterations,
    })
}
