//! Run configuration in TOML with dotted keys.
//!
//! Every key is optional and falls back to the built-in default. Units are
//! SI and angles are degrees; values are converted to radians on load. Any
//! key not listed in [`KNOWN_KEYS`] is rejected.

use crate::control::{ControlMode, ControllerGains};
use crate::robot::{builtin_posture, Posture, RobotError, BUILTIN_POSTURE_NAMES};
use crate::sim::{Integrator, ScenarioConfig, ScenarioError};
use crate::spatial::{deg, rad, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Every accepted key.
pub const KNOWN_KEYS: &[&str] = &[
    "posture.name",
    "posture.com_x_mm",
    "posture.com_z_mm",
    "posture.foot_x_mm",
    "posture.foot_z_mm",
    "posture.foot_pitch_min_deg",
    "posture.foot_pitch_max_deg",
    "geometry.mass_kg",
    "geometry.L_m",
    "geometry.L_f_m",
    "geometry.com_y_m",
    "geometry.fan_mass_kg",
    "geometry.inertia_kg_m2",
    "limits.thrust_max_per_fan_n",
    "limits.thrust_min_n",
    "limits.foot_pitch_rate_max_deg_s",
    "limits.thrust_time_constant_s",
    "controller.mode",
    "controller.rate_hz",
    "controller.kp_pitch",
    "controller.kd_pitch",
    "controller.ki_pitch",
    "controller.kp_yaw",
    "controller.kd_yaw",
    "controller.ki_yaw",
    "controller.damping",
    "controller.omega_pitch_rad_s",
    "controller.omega_yaw_rad_s",
    "controller.setpoint_roll_deg",
    "controller.setpoint_pitch_deg",
    "controller.setpoint_yaw_deg",
    "thrust.target_n",
    "thrust.ramp_s",
    "perturbation.com_offset_m",
    "perturbation.misalignment_left_deg",
    "perturbation.misalignment_right_deg",
    "perturbation.thrust_scale",
    "sim.duration_s",
    "sim.dt_s",
    "sim.sample_hz",
    "sim.seed",
    "sim.integrator",
    "sim.imu_attitude_sigma_deg",
    "sim.imu_rate_sigma_deg_s",
    "envelope.postures",
    "envelope.theta_min_deg",
    "envelope.theta_max_deg",
    "envelope.n_points",
    "envelope.min_vertical_force_n",
];

/// Envelope sweep settings. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSettings {
    pub postures: Vec<String>,
    pub theta_pitch_range: (f64, f64),
    pub n_points: usize,
    /// `None` uses the robot weight.
    pub min_vertical_force: Option<f64>,
}

impl Default for EnvelopeSettings {
    fn default() -> Self {
        Self {
            postures: BUILTIN_POSTURE_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            theta_pitch_range: (rad(-30.0), rad(30.0)),
            n_points: 61,
            min_vertical_force: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub envelope: EnvelopeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::new(builtin_posture("P1").expect("built-in posture")),
            envelope: EnvelopeSettings::default(),
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Reader {
    values: BTreeMap<String, toml::Value>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key} missing from KNOWN_KEYS");
        self.values.remove(key)
    }

    fn number(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
        match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::Type {
                key: key.into(),
                expected: "a number",
            }),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.take(key).map(|v| Self::number(key, &v)).transpose()
    }

    fn set_f64(&mut self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.f64(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn str(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        self.take(key)
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                _ => Err(ConfigError::Type {
                    key: key.into(),
                    expected: "a string",
                }),
            })
            .transpose()
    }

    fn uint(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.take(key)
            .map(|v| match v {
                toml::Value::Integer(i) if i >= 0 => Ok(i as u64),
                _ => Err(ConfigError::Type {
                    key: key.into(),
                    expected: "a non-negative integer",
                }),
            })
            .transpose()
    }

    fn numbers<const N: usize>(&mut self, key: &str) -> Result<Option<[f64; N]>, ConfigError> {
        let Some(v) = self.take(key) else {
            return Ok(None);
        };
        let expected = match N {
            3 => "an array of 3 numbers",
            4 => "an array of 4 numbers",
            _ => "an array of numbers",
        };
        let toml::Value::Array(items) = v else {
            return Err(ConfigError::Type {
                key: key.into(),
                expected,
            });
        };
        if items.len() != N {
            return Err(ConfigError::Type {
                key: key.into(),
                expected,
            });
        }
        let mut out = [0.0; N];
        for (slot, item) in out.iter_mut().zip(&items) {
            *slot = Self::number(key, item)?;
        }
        Ok(Some(out))
    }

    fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        let Some(v) = self.take(key) else {
            return Ok(None);
        };
        let err = || ConfigError::Type {
            key: key.into(),
            expected: "an array of strings",
        };
        let toml::Value::Array(items) = v else {
            return Err(err());
        };
        items
            .into_iter()
            .map(|i| match i {
                toml::Value::String(s) => Ok(s),
                _ => Err(err()),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.values.into_keys().next() {
            Some(key) => Err(ConfigError::UnknownKey(key)),
            None => Ok(()),
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

fn read_posture(r: &mut Reader) -> Result<Posture, ConfigError> {
    let name = r.str("posture.name")?.unwrap_or_else(|| "P1".into());
    let mut p = builtin_posture(&name).map_err(|e| invalid("posture.name", e.to_string()))?;
    let mm = |v: Option<f64>, slot: &mut f64| {
        if let Some(v) = v {
            *slot = v * 1e-3;
        }
    };
    mm(r.f64("posture.com_x_mm")?, &mut p.com_sagittal.0);
    mm(r.f64("posture.com_z_mm")?, &mut p.com_sagittal.1);
    mm(r.f64("posture.foot_x_mm")?, &mut p.foot_fan.0);
    mm(r.f64("posture.foot_z_mm")?, &mut p.foot_fan.1);
    if let Some(v) = r.f64("posture.foot_pitch_min_deg")? {
        p.foot_pitch_range.0 = rad(v);
    }
    if let Some(v) = r.f64("posture.foot_pitch_max_deg")? {
        p.foot_pitch_range.1 = rad(v);
    }
    p.validate()?;
    Ok(p)
}

fn read_gains(r: &mut Reader) -> Result<Option<ControllerGains>, ConfigError> {
    let required = [
        "controller.kp_pitch",
        "controller.kd_pitch",
        "controller.kp_yaw",
        "controller.kd_yaw",
    ];
    let mut values = [None; 4];
    for (slot, key) in values.iter_mut().zip(required) {
        *slot = r.f64(key)?;
    }
    let ki_pitch = r.f64("controller.ki_pitch")?.unwrap_or(0.0);
    let ki_yaw = r.f64("controller.ki_yaw")?.unwrap_or(0.0);
    match values {
        [None, None, None, None] if ki_pitch == 0.0 && ki_yaw == 0.0 => Ok(None),
        [Some(kp_pitch), Some(kd_pitch), Some(kp_yaw), Some(kd_yaw)] => {
            let g = ControllerGains {
                kp_pitch,
                kd_pitch,
                ki_pitch,
                kp_yaw,
                kd_yaw,
                ki_yaw,
            };
            g.validate().map_err(|e| invalid("controller", e))?;
            Ok(Some(g))
        }
        _ => {
            let missing = required
                .iter()
                .zip(values)
                .find(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .unwrap_or("controller.kp_pitch");
            Err(invalid(
                missing,
                "explicit gains need all of kp_pitch, kd_pitch, kp_yaw, kd_yaw",
            ))
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        let mut r = Reader { values };
        let mut cfg = RunConfig::default();
        let s = &mut cfg.scenario;

        s.posture = read_posture(&mut r)?;

        let g = &mut s.geometry;
        r.set_f64("geometry.mass_kg", &mut g.mass_total)?;
        r.set_f64("geometry.L_m", &mut g.waist_spacing)?;
        r.set_f64("geometry.L_f_m", &mut g.feet_spacing)?;
        r.set_f64("geometry.com_y_m", &mut g.com_y)?;
        r.set_f64("geometry.fan_mass_kg", &mut g.fan_mass)?;
        if let Some(i) = r.numbers::<3>("geometry.inertia_kg_m2")? {
            g.inertia_override = Some(i);
        }

        let l = &mut s.limits;
        r.set_f64("limits.thrust_max_per_fan_n", &mut l.thrust_max_per_fan)?;
        r.set_f64("limits.thrust_min_n", &mut l.thrust_min)?;
        if let Some(v) = r.f64("limits.foot_pitch_rate_max_deg_s")? {
            l.foot_pitch_rate_max = rad(v);
        }
        r.set_f64("limits.thrust_time_constant_s", &mut l.thrust_time_constant)?;

        if let Some(m) = r.str("controller.mode")? {
            s.mode = m
                .parse::<ControlMode>()
                .map_err(|e| invalid("controller.mode", e))?;
        }
        r.set_f64("controller.rate_hz", &mut s.control_rate_hz)?;
        s.gains = read_gains(&mut r)?;
        r.set_f64("controller.damping", &mut s.tuning.damping)?;
        r.set_f64("controller.omega_pitch_rad_s", &mut s.tuning.omega_pitch)?;
        r.set_f64("controller.omega_yaw_rad_s", &mut s.tuning.omega_yaw)?;
        for (key, slot) in [
            ("controller.setpoint_roll_deg", &mut s.setpoint.roll),
            ("controller.setpoint_pitch_deg", &mut s.setpoint.pitch),
            ("controller.setpoint_yaw_deg", &mut s.setpoint.yaw),
        ] {
            if let Some(v) = r.f64(key)? {
                *slot = rad(v);
            }
        }

        r.set_f64("thrust.target_n", &mut s.ramp.target)?;
        r.set_f64("thrust.ramp_s", &mut s.ramp.ramp_time)?;

        let p = &mut s.perturbation;
        if let Some(v) = r.numbers::<3>("perturbation.com_offset_m")? {
            p.com_offset = Vec3::from(v);
        }
        if let Some(v) = r.f64("perturbation.misalignment_left_deg")? {
            p.foot_axis_misalignment_left = rad(v);
        }
        if let Some(v) = r.f64("perturbation.misalignment_right_deg")? {
            p.foot_axis_misalignment_right = rad(v);
        }
        if let Some(v) = r.numbers::<4>("perturbation.thrust_scale")? {
            p.thrust_scale_error = v;
        }

        r.set_f64("sim.duration_s", &mut s.duration)?;
        r.set_f64("sim.dt_s", &mut s.dt)?;
        r.set_f64("sim.sample_hz", &mut s.sample_rate_hz)?;
        if let Some(seed) = r.uint("sim.seed")? {
            s.seed = seed;
        }
        if let Some(name) = r.str("sim.integrator")? {
            s.integrator = match name.to_ascii_lowercase().as_str() {
                "semi-implicit" | "semi_implicit" => Integrator::SemiImplicit,
                "rk4" => Integrator::Rk4,
                other => {
                    return Err(invalid(
                        "sim.integrator",
                        format!("unknown integrator `{other}` (expected semi-implicit or rk4)"),
                    ))
                }
            };
        }
        if let Some(v) = r.f64("sim.imu_attitude_sigma_deg")? {
            s.imu_noise.attitude_sigma = rad(v);
        }
        if let Some(v) = r.f64("sim.imu_rate_sigma_deg_s")? {
            s.imu_noise.rate_sigma = rad(v);
        }

        let e = &mut cfg.envelope;
        if let Some(names) = r.strings("envelope.postures")? {
            e.postures = names;
        }
        if let Some(v) = r.f64("envelope.theta_min_deg")? {
            e.theta_pitch_range.0 = rad(v);
        }
        if let Some(v) = r.f64("envelope.theta_max_deg")? {
            e.theta_pitch_range.1 = rad(v);
        }
        if let Some(n) = r.uint("envelope.n_points")? {
            e.n_points = n as usize;
        }
        e.min_vertical_force = r
            .f64("envelope.min_vertical_force_n")?
            .or(e.min_vertical_force);

        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        let e = &self.envelope;
        for name in &e.postures {
            builtin_posture(name).map_err(|err| invalid("envelope.postures", err.to_string()))?;
        }
        if e.n_points < 2 {
            return Err(invalid("envelope.n_points", "need at least 2 points"));
        }
        if !(e.theta_pitch_range.0 <= e.theta_pitch_range.1) {
            return Err(invalid(
                "envelope.theta_min_deg",
                "must not exceed theta_max_deg",
            ));
        }
        if let Some(f) = e.min_vertical_force {
            if !(f >= 0.0) {
                return Err(invalid(
                    "envelope.min_vertical_force_n",
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }

    /// Resolved configuration as flat `key = value` TOML lines, degrees at
    /// the boundary. Loading the output reproduces this configuration except
    /// for tuned gains, which are written only when set explicitly.
    pub fn to_toml_string(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        let num = |v: f64| format!("{v:?}");
        let p = &s.posture;
        kv("posture.name", format!("{:?}", p.name));
        kv("posture.com_x_mm", num(p.com_sagittal.0 * 1e3));
        kv("posture.com_z_mm", num(p.com_sagittal.1 * 1e3));
        kv("posture.foot_x_mm", num(p.foot_fan.0 * 1e3));
        kv("posture.foot_z_mm", num(p.foot_fan.1 * 1e3));
        kv("posture.foot_pitch_min_deg", num(deg(p.foot_pitch_range.0)));
        kv("posture.foot_pitch_max_deg", num(deg(p.foot_pitch_range.1)));
        let g = &s.geometry;
        kv("geometry.mass_kg", num(g.mass_total));
        kv("geometry.L_m", num(g.waist_spacing));
        kv("geometry.L_f_m", num(g.feet_spacing));
        kv("geometry.com_y_m", num(g.com_y));
        kv("geometry.fan_mass_kg", num(g.fan_mass));
        if let Some([a, b, c]) = g.inertia_override {
            kv("geometry.inertia_kg_m2", format!("[{a:?}, {b:?}, {c:?}]"));
        }
        let l = &s.limits;
        kv("limits.thrust_max_per_fan_n", num(l.thrust_max_per_fan));
        kv("limits.thrust_min_n", num(l.thrust_min));
        kv(
            "limits.foot_pitch_rate_max_deg_s",
            num(deg(l.foot_pitch_rate_max)),
        );
        kv("limits.thrust_time_constant_s", num(l.thrust_time_constant));
        kv("controller.mode", format!("{:?}", s.mode.as_str()));
        kv("controller.rate_hz", num(s.control_rate_hz));
        if let Some(gains) = &s.gains {
            kv("controller.kp_pitch", num(gains.kp_pitch));
            kv("controller.kd_pitch", num(gains.kd_pitch));
            kv("controller.ki_pitch", num(gains.ki_pitch));
            kv("controller.kp_yaw", num(gains.kp_yaw));
            kv("controller.kd_yaw", num(gains.kd_yaw));
            kv("controller.ki_yaw", num(gains.ki_yaw));
        }
        kv("controller.damping", num(s.tuning.damping));
        kv("controller.omega_pitch_rad_s", num(s.tuning.omega_pitch));
        kv("controller.omega_yaw_rad_s", num(s.tuning.omega_yaw));
        kv("controller.setpoint_roll_deg", num(deg(s.setpoint.roll)));
        kv("controller.setpoint_pitch_deg", num(deg(s.setpoint.pitch)));
        kv("controller.setpoint_yaw_deg", num(deg(s.setpoint.yaw)));
        kv("thrust.target_n", num(s.ramp.target));
        kv("thrust.ramp_s", num(s.ramp.ramp_time));
        let pt = &s.perturbation;
        let c = pt.com_offset;
        kv(
            "perturbation.com_offset_m",
            format!("[{:?}, {:?}, {:?}]", c.x, c.y, c.z),
        );
        kv(
            "perturbation.misalignment_left_deg",
            num(deg(pt.foot_axis_misalignment_left)),
        );
        kv(
            "perturbation.misalignment_right_deg",
            num(deg(pt.foot_axis_misalignment_right)),
        );
        let k = pt.thrust_scale_error;
        kv(
            "perturbation.thrust_scale",
            format!("[{:?}, {:?}, {:?}, {:?}]", k[0], k[1], k[2], k[3]),
        );
        kv("sim.duration_s", num(s.duration));
        kv("sim.dt_s", num(s.dt));
        kv("sim.sample_hz", num(s.sample_rate_hz));
        kv("sim.seed", s.seed.to_string());
        let integrator = match s.integrator {
            Integrator::SemiImplicit => "semi-implicit",
            Integrator::Rk4 => "rk4",
        };
        kv("sim.integrator", format!("{integrator:?}"));
        kv(
            "sim.imu_attitude_sigma_deg",
            num(deg(s.imu_noise.attitude_sigma)),
        );
        kv("sim.imu_rate_sigma_deg_s", num(deg(s.imu_noise.rate_sigma)));
        let e = &self.envelope;
        let names: Vec<String> = e.postures.iter().map(|n| format!("{n:?}")).collect();
        kv("envelope.postures", format!("[{}]", names.join(", ")));
        kv("envelope.theta_min_deg", num(deg(e.theta_pitch_range.0)));
        kv("envelope.theta_max_deg", num(deg(e.theta_pitch_range.1)));
        kv("envelope.n_points", e.n_points.to_string());
        if let Some(f) = e.min_vertical_force {
            kv("envelope.min_vertical_force_n", num(f));
        }
        out
    }
}
