//! Physical parameters, takeoff postures and derived fan geometry.

use crate::spatial::{rad, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobotError {
    #[error("unknown posture `{0}` (expected one of P1, P2, P3)")]
    UnknownPosture(String),
    #[error("invalid posture `{name}`: {reason}")]
    InvalidPosture { name: String, reason: String },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid fan limits: {0}")]
    InvalidLimits(String),
}

/// A fixed takeoff joint configuration: sagittal CoM and foot-fan placement
/// in the waist frame, plus the usable foot pitch range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posture {
    pub name: String,
    /// (x_c, z_c), metres.
    pub com_sagittal: (f64, f64),
    /// (p_fx, p_fz), metres.
    pub foot_fan: (f64, f64),
    /// (min, max), radians.
    pub foot_pitch_range: (f64, f64),
}

impl Posture {
    pub fn new(
        name: impl Into<String>,
        com_sagittal: (f64, f64),
        foot_fan: (f64, f64),
        foot_pitch_range: (f64, f64),
    ) -> Result<Self, RobotError> {
        let p = Self {
            name: name.into(),
            com_sagittal,
            foot_fan,
            foot_pitch_range,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let bad = |reason: &str| RobotError::InvalidPosture {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        let (lo, hi) = self.foot_pitch_range;
        let vals = [
            self.com_sagittal.0,
            self.com_sagittal.1,
            self.foot_fan.0,
            self.foot_fan.1,
            lo,
            hi,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        if lo >= hi {
            return Err(bad("foot pitch range min must be below max"));
        }
        let limit = rad(90.0);
        if lo < -limit || hi > limit {
            return Err(bad("foot pitch range must lie within [-90, 90] degrees"));
        }
        Ok(())
    }

    /// Vertical lever arm between the CoM and the foot fans, z_c - p_fz.
    pub fn foot_lever_z(&self) -> f64 {
        self.com_sagittal.1 - self.foot_fan.1
    }
}

type PostureRow = (&'static str, (f64, f64), (f64, f64), (f64, f64));

/// The three tabulated takeoff postures, in millimetres and degrees.
const BUILTIN_POSTURES: [PostureRow; 3] = [
    ("P1", (25.0, -243.0), (20.0, -610.0), (-74.0, 90.0)),
    ("P2", (20.0, -265.0), (10.0, -650.0), (-90.0, 90.0)),
    ("P3", (50.0, -225.0), (70.0, -580.0), (-82.0, 90.0)),
];

pub const BUILTIN_POSTURE_NAMES: [&str; 3] = ["P1", "P2", "P3"];

pub fn builtin_posture(name: &str) -> Result<Posture, RobotError> {
    let (label, com, foot, range) = BUILTIN_POSTURES
        .iter()
        .find(|(label, ..)| label.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| RobotError::UnknownPosture(name.to_string()))?;
    Posture::new(
        *label,
        (com.0 * 1e-3, com.1 * 1e-3),
        (foot.0 * 1e-3, foot.1 * 1e-3),
        (rad(range.0), rad(range.1)),
    )
}

/// Inclusive range check of a foot pitch command.
pub fn validate_foot_command(p: &Posture, theta: f64) -> bool {
    let (lo, hi) = p.foot_pitch_range;
    theta >= lo && theta <= hi
}

/// Posture-independent parameters. Fan spacings are not published and are
/// estimated from the overall proportions of an 830 mm tall robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub mass_total: f64,
    /// L, front-to-back waist fan distance.
    pub waist_spacing: f64,
    /// L_f, left-to-right foot fan distance.
    pub feet_spacing: f64,
    /// Lateral CoM offset; zero under sagittal symmetry.
    pub com_y: f64,
    /// Mass of one ducted fan, used by the inertia surrogate.
    pub fan_mass: f64,
    /// Diagonal inertia override (Ixx, Iyy, Izz) in kg m^2.
    pub inertia_override: Option<[f64; 3]>,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            mass_total: 17.0,
            waist_spacing: 0.30,
            feet_spacing: 0.25,
            com_y: 0.0,
            fan_mass: 0.488,
            inertia_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    pub mass_total: f64,
    /// CoM in the body frame.
    pub com_body: Vec3,
    pub fan_spacing_waist: f64,
    pub fan_foot_x: f64,
    pub fan_foot_z: f64,
    pub fan_spacing_feet: f64,
    /// Inertia about the CoM, body frame.
    pub inertia_body: Matrix3<f64>,
}

/// Fan slots in the order used throughout: front, back, left, right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fan {
    Front,
    Back,
    Left,
    Right,
}

impl Fan {
    pub const ALL: [Fan; 4] = [Fan::Front, Fan::Back, Fan::Left, Fan::Right];
}

impl RobotGeometry {
    pub fn fan_waist_front_x(&self) -> f64 {
        0.5 * self.fan_spacing_waist
    }

    pub fn fan_waist_back_x(&self) -> f64 {
        -0.5 * self.fan_spacing_waist
    }

    /// Fan mounting point in the body frame. Left is +y.
    pub fn fan_position(&self, fan: Fan) -> Vec3 {
        match fan {
            Fan::Front => Vec3::new(self.fan_waist_front_x(), 0.0, 0.0),
            Fan::Back => Vec3::new(self.fan_waist_back_x(), 0.0, 0.0),
            Fan::Left => Vec3::new(
                self.fan_foot_x,
                0.5 * self.fan_spacing_feet,
                self.fan_foot_z,
            ),
            Fan::Right => Vec3::new(
                self.fan_foot_x,
                -0.5 * self.fan_spacing_feet,
                self.fan_foot_z,
            ),
        }
    }

    pub fn weight(&self) -> f64 {
        self.mass_total * GRAVITY
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let bad = |s: &str| Err(RobotError::InvalidGeometry(s.to_string()));
        if !(self.mass_total > 0.0 && self.mass_total.is_finite()) {
            return bad("mass_total must be positive");
        }
        if !(self.fan_spacing_waist > 0.0) {
            return bad("waist fan spacing must be positive");
        }
        if !(self.fan_spacing_feet > 0.0) {
            return bad("foot fan spacing must be positive");
        }
        if self.com_body.iter().any(|v| !v.is_finite())
            || !self.fan_foot_x.is_finite()
            || !self.fan_foot_z.is_finite()
        {
            return bad("positions must be finite");
        }
        let i = &self.inertia_body;
        if (i - i.transpose()).abs().max() > 1e-12 {
            return bad("inertia must be symmetric");
        }
        if i.cholesky().is_none() {
            return bad("inertia must be positive definite");
        }
        Ok(())
    }

    /// Copy with the CoM shifted by `offset` (inertia kept).
    pub fn with_com_offset(&self, offset: &Vec3) -> Self {
        let mut g = self.clone();
        g.com_body += offset;
        g
    }
}

/// Diagonal inertia of the five-point-mass surrogate: one point per fan at its
/// mount and the remaining mass at the CoM.
pub fn surrogate_inertia(geo: &RobotGeometry, fan_mass: f64) -> Matrix3<f64> {
    let mut diag = Vec3::zeros();
    for fan in Fan::ALL {
        let r = geo.fan_position(fan) - geo.com_body;
        diag.x += fan_mass * (r.y * r.y + r.z * r.z);
        diag.y += fan_mass * (r.x * r.x + r.z * r.z);
        diag.z += fan_mass * (r.x * r.x + r.y * r.y);
    }
    Matrix3::from_diagonal(&diag)
}

pub fn geometry_from_posture(
    p: &Posture,
    params: &GeometryParams,
) -> Result<RobotGeometry, RobotError> {
    p.validate()?;
    if !(params.fan_mass >= 0.0 && 4.0 * params.fan_mass < params.mass_total) {
        return Err(RobotError::InvalidGeometry(
            "fan mass must be non-negative and the four fans lighter than the robot".into(),
        ));
    }
    let mut geo = RobotGeometry {
        mass_total: params.mass_total,
        com_body: Vec3::new(p.com_sagittal.0, params.com_y, p.com_sagittal.1),
        fan_spacing_waist: params.waist_spacing,
        fan_foot_x: p.foot_fan.0,
        fan_foot_z: p.foot_fan.1,
        fan_spacing_feet: params.feet_spacing,
        inertia_body: Matrix3::zeros(),
    };
    geo.inertia_body = match params.inertia_override {
        Some([ixx, iyy, izz]) => Matrix3::from_diagonal(&Vec3::new(ixx, iyy, izz)),
        None => surrogate_inertia(&geo, params.fan_mass),
    };
    geo.validate()?;
    Ok(geo)
}

/// Actuator limits shared by all four fans and both ankles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanLimits {
    pub thrust_max_per_fan: f64,
    pub thrust_min: f64,
    /// rad/s
    pub foot_pitch_rate_max: f64,
    /// First-order spool-up time constant; zero means instantaneous.
    pub thrust_time_constant: f64,
}

impl Default for FanLimits {
    fn default() -> Self {
        Self {
            thrust_max_per_fan: 50.0,
            thrust_min: 0.0,
            foot_pitch_rate_max: 8.0,
            thrust_time_constant: 0.1,
        }
    }
}

impl FanLimits {
    /// Limits with an instantaneous thrust response, for static analysis.
    pub fn instantaneous() -> Self {
        Self {
            thrust_time_constant: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let bad = |s: &str| Err(RobotError::InvalidLimits(s.to_string()));
        if !(self.thrust_min >= 0.0 && self.thrust_min < self.thrust_max_per_fan)
            || !self.thrust_max_per_fan.is_finite()
        {
            return bad("require 0 <= thrust_min < thrust_max_per_fan");
        }
        if !(self.foot_pitch_rate_max > 0.0) {
            return bad("foot pitch rate limit must be positive");
        }
        if !(self.thrust_time_constant >= 0.0) {
            return bad("thrust time constant must be non-negative");
        }
        Ok(())
    }

    pub fn total_thrust_max(&self) -> f64 {
        4.0 * self.thrust_max_per_fan
    }

    pub fn thrust_to_weight(&self, geo: &RobotGeometry) -> f64 {
        self.total_thrust_max() / geo.weight()
    }
}
