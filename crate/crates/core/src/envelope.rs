//! Attainable pitch-torque boundaries for the differential-thrust (DT) and
//! thrust-vectoring (TVC) strategies.
//!
//! Both strategies keep the legs parallel: equal foot thrusts and, for TVC,
//! equal foot angles. For a fixed foot angle the pitch torque and the world
//! vertical thrust are both linear in `(f_front, f_back, f_foot)`, so each
//! extremum is a box-bounded LP with one covering constraint, solved exactly
//! by a fractional-knapsack pass. TVC adds a 1-D search over the foot angle.

use crate::robot::{FanLimits, Posture, RobotGeometry};
use crate::spatial::deg;
use crate::wrench::FanState;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Coarse scan step of the TVC foot-angle search.
const TVC_SCAN_STEP: f64 = 0.05 * std::f64::consts::PI / 180.0;
const GOLDEN_ITERS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Dt,
    Tvc,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error(
        "infeasible at pitch {theta_pitch_deg:.3} deg: need {required:.3} N vertical thrust, at most {available:.3} N available"
    )]
    Infeasible {
        theta_pitch_deg: f64,
        required: f64,
        available: f64,
    },
    #[error("invalid envelope constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstraint {
    /// Lower bound on the world-frame vertical thrust (gravity excluded).
    pub min_vertical_force: f64,
    pub per_fan_max: f64,
    pub per_fan_min: f64,
    /// Admissible common foot angle (radians); unused by DT.
    pub foot_angle_range: (f64, f64),
    pub strategy: Strategy,
}

impl EnvelopeConstraint {
    /// Vertical thrust at least the robot's weight, fan bounds from `limits`,
    /// foot range from `posture`.
    pub fn for_posture(
        geo: &RobotGeometry,
        posture: &Posture,
        limits: &FanLimits,
        strategy: Strategy,
    ) -> Self {
        Self {
            min_vertical_force: geo.weight(),
            per_fan_max: limits.thrust_max_per_fan,
            per_fan_min: limits.thrust_min,
            foot_angle_range: posture.foot_pitch_range,
            strategy,
        }
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let bad = |s: &str| Err(EnvelopeError::InvalidConstraint(s.to_string()));
        if !(self.min_vertical_force >= 0.0 && self.min_vertical_force.is_finite()) {
            return bad("min_vertical_force must be finite and non-negative");
        }
        if !(self.per_fan_max > 0.0 && self.per_fan_max.is_finite()) {
            return bad("per_fan_max must be positive");
        }
        if !(self.per_fan_min >= 0.0 && self.per_fan_min <= self.per_fan_max) {
            return bad("per_fan_min must lie in [0, per_fan_max]");
        }
        let (lo, hi) = self.foot_angle_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("foot angle range must be finite with min <= max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub theta_pitch: f64,
    pub tau_max: f64,
    pub tau_min: f64,
    pub argmax_state: FanState,
    pub argmin_state: FanState,
}

/// `max c.x  s.t.  a.x >= b,  lo <= x <= hi`.
#[derive(Debug, Clone, Copy)]
struct CoveringLp<const N: usize> {
    c: [f64; N],
    a: [f64; N],
    b: f64,
    lo: [f64; N],
    hi: [f64; N],
}

impl<const N: usize> CoveringLp<N> {
    fn max_coverage(&self) -> f64 {
        (0..N)
            .map(|i| (self.a[i] * self.lo[i]).max(self.a[i] * self.hi[i]))
            .sum()
    }

    fn solve(&self) -> Option<([f64; N], f64)> {
        let tol = 1e-9 * self.b.abs().max(1.0);
        if self.max_coverage() < self.b - tol {
            return None;
        }
        // Unconstrained optimum; ties go to the bound that covers more.
        let mut x = [0.0; N];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if self.c[i] > 0.0 {
                self.hi[i]
            } else if self.c[i] < 0.0 {
                self.lo[i]
            } else if self.a[i] >= 0.0 {
                self.hi[i]
            } else {
                self.lo[i]
            };
        }
        let mut deficit = self.b - dot(&self.a, &x);
        if deficit > 0.0 {
            // Each variable can buy coverage at a fixed objective cost per unit.
            let mut moves: Vec<(f64, usize)> = (0..N)
                .filter_map(|i| {
                    let room = if self.a[i] > 0.0 {
                        self.hi[i] - x[i]
                    } else if self.a[i] < 0.0 {
                        x[i] - self.lo[i]
                    } else {
                        0.0
                    };
                    (room > 0.0).then(|| (-self.c[i] * self.a[i].signum() / self.a[i].abs(), i))
                })
                .collect();
            moves.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            for (_, i) in moves {
                if deficit <= 0.0 {
                    break;
                }
                let step = self.a[i].signum();
                let room = if step > 0.0 {
                    self.hi[i] - x[i]
                } else {
                    x[i] - self.lo[i]
                };
                let delta = (deficit / self.a[i].abs()).min(room);
                x[i] += step * delta;
                deficit -= delta * self.a[i].abs();
            }
            if deficit > tol {
                return None;
            }
        }
        Some((x, dot(&self.c, &x)))
    }
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Objective and coverage coefficients over `(f_front, f_back, f_foot)` for a
/// common foot angle `theta` at body pitch `theta_pitch`.
fn pitch_lp(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
    theta: f64,
    theta_pitch: f64,
    sign: f64,
) -> CoveringLp<3> {
    let half_l = 0.5 * geo.fan_spacing_waist;
    let x_c = geo.com_body.x;
    let z_c = geo.com_body.z;
    let (s, co) = theta.sin_cos();
    let cp = theta_pitch.cos();
    let foot_torque = 2.0 * (co * (x_c - geo.fan_foot_x) - s * (z_c - geo.fan_foot_z));
    CoveringLp {
        c: [
            -sign * (half_l - x_c),
            sign * (half_l + x_c),
            sign * foot_torque,
        ],
        a: [cp, cp, 2.0 * (theta + theta_pitch).cos()],
        b: c.min_vertical_force,
        lo: [c.per_fan_min; 3],
        hi: [c.per_fan_max; 3],
    }
}

fn fan_state(x: &[f64; 3], theta: f64) -> FanState {
    FanState {
        f_front: x[0],
        f_back: x[1],
        f_left: x[2],
        f_right: x[2],
        theta_left: theta,
        theta_right: theta,
    }
}

/// Best signed torque (`sign` = +1 for max, -1 for min) at a fixed foot angle.
fn best_at_angle(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
    theta: f64,
    theta_pitch: f64,
    sign: f64,
) -> Option<(f64, FanState)> {
    pitch_lp(geo, c, theta, theta_pitch, sign)
        .solve()
        .map(|(x, v)| (v, fan_state(&x, theta)))
}

fn tvc_grid(range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    let n = ((hi - lo) / TVC_SCAN_STEP).ceil().max(0.0) as usize;
    if n == 0 {
        return vec![lo];
    }
    (0..=n)
        .map(|k| {
            if k == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n as f64
            }
        })
        .collect()
}

fn best_over_angles(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
    theta_pitch: f64,
    sign: f64,
) -> Option<(f64, FanState)> {
    let eval = |theta: f64| best_at_angle(geo, c, theta, theta_pitch, sign);
    let grid = tvc_grid(c.foot_angle_range);
    let mut best: Option<(f64, FanState, usize)> = None;
    for (k, &theta) in grid.iter().enumerate() {
        if let Some((v, fs)) = eval(theta) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, fs, k));
            }
        }
    }
    // Thrust-up feet are always a candidate so TVC never falls below DT.
    let (lo, hi) = c.foot_angle_range;
    if lo <= 0.0 && hi >= 0.0 {
        if let Some((v, fs)) = eval(0.0) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, fs, usize::MAX));
            }
        }
    }
    let (mut best_v, mut best_fs, k) = best?;
    if k == usize::MAX || grid.len() < 2 {
        return Some((best_v, best_fs));
    }
    // Golden-section refinement between the grid neighbours of the best node.
    let mut a = grid[k.saturating_sub(1)];
    let mut b = grid[(k + 1).min(grid.len() - 1)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let value = |t: f64| eval(t).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (value(x1), value(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = value(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = value(x2);
        }
    }
    if let Some((v, fs)) = eval(0.5 * (a + b)) {
        if v > best_v {
            best_v = v;
            best_fs = fs;
        }
    }
    Some((best_v, best_fs))
}

fn infeasible(geo: &RobotGeometry, c: &EnvelopeConstraint, theta_pitch: f64) -> EnvelopeError {
    let thetas = match c.strategy {
        Strategy::Dt => vec![0.0],
        Strategy::Tvc => tvc_grid(c.foot_angle_range),
    };
    let available = thetas
        .iter()
        .map(|&t| pitch_lp(geo, c, t, theta_pitch, 1.0).max_coverage())
        .fold(f64::NEG_INFINITY, f64::max);
    EnvelopeError::Infeasible {
        theta_pitch_deg: deg(theta_pitch),
        required: c.min_vertical_force,
        available,
    }
}

fn extremes(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
    theta_pitch: f64,
    search: impl Fn(f64) -> Option<(f64, FanState)>,
) -> Result<EnvelopePoint, EnvelopeError> {
    c.validate()?;
    let (tau_max, argmax_state) = search(1.0).ok_or_else(|| infeasible(geo, c, theta_pitch))?;
    let (neg_min, argmin_state) = search(-1.0).ok_or_else(|| infeasible(geo, c, theta_pitch))?;
    Ok(EnvelopePoint {
        theta_pitch,
        tau_max,
        tau_min: -neg_min,
        argmax_state,
        argmin_state,
    })
}

/// Pitch-torque extremes using only thrust magnitudes, feet held thrust-up.
pub fn max_pitch_torque_dt(
    geo: &RobotGeometry,
    theta_pitch: f64,
    c: &EnvelopeConstraint,
) -> Result<EnvelopePoint, EnvelopeError> {
    let c = c.with_strategy(Strategy::Dt);
    extremes(geo, &c, theta_pitch, |sign| {
        best_at_angle(geo, &c, 0.0, theta_pitch, sign)
    })
}

/// Pitch-torque extremes with free thrusts and a common foot angle.
pub fn max_pitch_torque_tvc(
    geo: &RobotGeometry,
    theta_pitch: f64,
    c: &EnvelopeConstraint,
) -> Result<EnvelopePoint, EnvelopeError> {
    let c = c.with_strategy(Strategy::Tvc);
    extremes(geo, &c, theta_pitch, |sign| {
        best_over_angles(geo, &c, theta_pitch, sign)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub theta_pitch: f64,
    pub dt: Result<EnvelopePoint, EnvelopeError>,
    pub tvc: Result<EnvelopePoint, EnvelopeError>,
}

impl EnvelopeRow {
    pub fn feasible(&self) -> bool {
        self.dt.is_ok() && self.tvc.is_ok()
    }
}

/// Evenly spaced pitch sweep over `[theta_lo, theta_hi]`. A zero-width range
/// gives a single row. Infeasible points are recorded per row.
pub fn envelope_sweep(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
    theta_pitch_range: (f64, f64),
    n_points: usize,
) -> Result<Vec<EnvelopeRow>, EnvelopeError> {
    c.validate()?;
    let (lo, hi) = theta_pitch_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(EnvelopeError::InvalidSweep(
            "pitch range must be finite with min <= max".into(),
        ));
    }
    if n_points < 2 {
        return Err(EnvelopeError::InvalidSweep(
            "n_points must be at least 2".into(),
        ));
    }
    let thetas: Vec<f64> = if lo == hi {
        vec![lo]
    } else {
        (0..n_points)
            .map(|k| lo + (hi - lo) * k as f64 / (n_points - 1) as f64)
            .collect()
    };
    Ok(thetas
        .into_iter()
        .map(|theta_pitch| EnvelopeRow {
            theta_pitch,
            dt: max_pitch_torque_dt(geo, theta_pitch, c),
            tvc: max_pitch_torque_tvc(geo, theta_pitch, c),
        })
        .collect())
}

pub const ENVELOPE_CSV_HEADER: &str =
    "theta_pitch_deg,dt_tau_min,dt_tau_max,tvc_tau_min,tvc_tau_max,feasible_flag";

pub fn envelope_csv(rows: &[EnvelopeRow]) -> String {
    let mut out = String::new();
    out.push_str(ENVELOPE_CSV_HEADER);
    out.push('\n');
    let pair = |r: &Result<EnvelopePoint, EnvelopeError>| match r {
        Ok(p) => (format!("{:.9}", p.tau_min), format!("{:.9}", p.tau_max)),
        Err(_) => ("nan".to_string(), "nan".to_string()),
    };
    for row in rows {
        let (dmin, dmax) = pair(&row.dt);
        let (tmin, tmax) = pair(&row.tvc);
        let _ = writeln!(
            out,
            "{:.6},{dmin},{dmax},{tmin},{tmax},{}",
            deg(row.theta_pitch),
            u8::from(row.feasible())
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub dt: EnvelopePoint,
    pub tvc: EnvelopePoint,
    pub tau_max_ratio: f64,
    pub tau_min_ratio: f64,
}

/// TVC over DT torque authority at level attitude, for both directions.
pub fn level_ratio(
    geo: &RobotGeometry,
    c: &EnvelopeConstraint,
) -> Result<RatioReport, EnvelopeError> {
    let dt = max_pitch_torque_dt(geo, 0.0, c)?;
    let tvc = max_pitch_torque_tvc(geo, 0.0, c)?;
    Ok(RatioReport {
        tau_max_ratio: tvc.tau_max / dt.tau_max,
        tau_min_ratio: tvc.tau_min / dt.tau_min,
        dt,
        tvc,
    })
}
