use crate::spatial::{deg, Vec3};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const SIM_CSV_HEADER: &str = "time_s,px,py,pz,vx,vy,vz,roll_deg,pitch_deg,yaw_deg,wx,wy,wz,\
theta_L_cmd_deg,theta_R_cmd_deg,theta_L_deg,theta_R_deg,fF,fB,fL,fR,phase";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ground,
    Airborne,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Ground => "ground",
            Phase::Airborne => "airborne",
        }
    }
}

/// One sampled row. Angles are radians here and degrees in the CSV; yaw is
/// unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub time: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub angular_velocity: Vec3,
    pub theta_left_cmd: f64,
    pub theta_right_cmd: f64,
    pub theta_left: f64,
    pub theta_right: f64,
    /// Front, back, left, right.
    pub thrusts: [f64; 4],
    pub force_world: Vec3,
    pub torque_body: Vec3,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub name: String,
    pub time_s: f64,
}

/// Run summary written as the JSON sidecar. Extremes cover every physics
/// step, not only the sampled rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Events {
    pub liftoff_time_s: Option<f64>,
    pub max_abs_pitch_deg: f64,
    pub max_abs_yaw_deg: f64,
    pub max_abs_roll_deg: f64,
    pub altitude_at_2s_m: Option<f64>,
    pub final_time_s: f64,
    pub never_lifted: bool,
    pub diverged: bool,
    pub crossings: Vec<Crossing>,
}

impl Events {
    pub fn crossing(&self, name: &str) -> Option<f64> {
        self.crossings
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.time_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub sample_period: f64,
    pub rows: Vec<LogRow>,
    pub events: Events,
}

impl SimLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(256 * (self.rows.len() + 1));
        out.push_str(SIM_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let values = [
                r.time,
                r.position.x,
                r.position.y,
                r.position.z,
                r.velocity.x,
                r.velocity.y,
                r.velocity.z,
                deg(r.roll),
                deg(r.pitch),
                deg(r.yaw),
                r.angular_velocity.x,
                r.angular_velocity.y,
                r.angular_velocity.z,
                deg(r.theta_left_cmd),
                deg(r.theta_right_cmd),
                deg(r.theta_left),
                deg(r.theta_right),
                r.thrusts[0],
                r.thrusts[1],
                r.thrusts[2],
                r.thrusts[3],
            ];
            for v in values {
                write!(out, "{v:.9},").expect("writing to a String");
            }
            out.push_str(r.phase.as_str());
            out.push('\n');
        }
        out
    }

    pub fn events_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize")
    }
}
