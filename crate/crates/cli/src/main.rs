//! `tvcflight`: envelope sweeps, hover trim, wrench spot checks and takeoff
//! simulations from a TOML run configuration.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 usage or config error, 3 infeasible
//! geometry or no trim, 4 simulation divergence.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use tvcflight_core::config::RunConfig;
use tvcflight_core::control::ControlMode;
use tvcflight_core::envelope::{
    envelope_csv, envelope_sweep, level_ratio, EnvelopePoint, EnvelopeRow,
};
use tvcflight_core::robot::{builtin_posture, geometry_from_posture, Posture};
use tvcflight_core::sim::{run_scenario, ScenarioError};
use tvcflight_core::spatial::{deg, euler_to_quat, rad, EulerAngles};
use tvcflight_core::trim::hover_trim;
use tvcflight_core::wrench::{generalized_wrench_3d, FanState};
use tvcflight_core::{EnvelopeConstraint, Strategy};

#[derive(Parser, Debug)]
#[command(
    name = "tvcflight",
    version,
    about = "Thrust-vectoring takeoff toolkit for a four-ducted-fan humanoid"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides sim.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pitch-torque envelopes (DT and TVC) over a body pitch sweep.
    Envelope {
        /// Comma-separated posture names; defaults to envelope.postures.
        #[arg(long, value_delimiter = ',')]
        postures: Option<Vec<String>>,
    },
    /// Closed-loop takeoff simulation.
    Takeoff {
        /// both-on, pitch-only or all-off; overrides controller.mode
        #[arg(long)]
        mode: Option<String>,
        /// Built-in posture (P1, P2, P3); overrides posture.name
        #[arg(long)]
        posture: Option<String>,
    },
    /// Hover trim of a posture.
    Trim {
        /// Built-in posture (P1, P2, P3); overrides posture.name
        #[arg(long)]
        posture: Option<String>,
        /// Thrust-up feet with a differential waist split instead of equal thrusts.
        #[arg(long)]
        differential: bool,
    },
    /// Wrench of one fan state. Thrusts in N, angles in degrees.
    WrenchEval {
        /// Built-in posture (P1, P2, P3); overrides posture.name
        #[arg(long)]
        posture: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        thrust_f: f64,
        #[arg(long, default_value_t = 0.0)]
        thrust_b: f64,
        /// Left foot fan.
        #[arg(long, default_value_t = 0.0)]
        thrust_fl: f64,
        /// Right foot fan.
        #[arg(long, default_value_t = 0.0)]
        thrust_fr: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta_l: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta_r: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        roll: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pitch: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Envelope { .. } => "envelope",
            Command::Takeoff { .. } => "takeoff",
            Command::Trim { .. } => "trim",
            Command::WrenchEval { .. } => "wrench-eval",
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Infeasible(String),
    Diverged(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Infeasible(m) => format!("infeasible: {m}"),
            CliError::Diverged(m) => format!("diverged: {m}"),
            CliError::Io(m) => format!("i/o error: {m}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    args: Vec<String>,
    config: String,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    wall_clock_s: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs and writes each one via a temporary file and rename.
struct Writer {
    dir: PathBuf,
    written: Vec<FileRecord>,
}

impl Writer {
    fn new(dir: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(path)
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

struct Context {
    cfg: RunConfig,
    inputs: Vec<FileRecord>,
    format: Format,
}

fn load(cli: &Cli) -> CliResult<Context> {
    let (mut cfg, inputs) = match &cli.config {
        Some(path) => {
            let text = fs::read(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let s = String::from_utf8(text.clone())
                .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
            let cfg = RunConfig::from_toml_str(&s)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let record = FileRecord {
                path: path.display().to_string(),
                sha256: sha256_hex(&text),
                bytes: text.len(),
            };
            (cfg, vec![record])
        }
        None => (RunConfig::default(), Vec::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    Ok(Context {
        cfg,
        inputs,
        format: cli.format,
    })
}

/// The configured posture (with its overrides) when the name matches,
/// otherwise the built-in table entry.
fn resolve_posture(cfg: &RunConfig, name: Option<&str>, flag: &str) -> CliResult<Posture> {
    match name {
        None => Ok(cfg.scenario.posture.clone()),
        Some(n) if n.eq_ignore_ascii_case(&cfg.scenario.posture.name) => {
            Ok(cfg.scenario.posture.clone())
        }
        Some(n) => builtin_posture(n).map_err(|e| CliError::Config(format!("{flag}: {e}"))),
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn print_report(format: Format, pairs: &[(&str, String)]) -> String {
    let text = match format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = pairs
                .iter()
                .map(|(k, v)| {
                    let value = v
                        .parse::<f64>()
                        .ok()
                        .and_then(serde_json::Number::from_f64)
                        .map(serde_json::Value::Number)
                        .unwrap_or_else(|| serde_json::Value::String(v.clone()));
                    (k.to_string(), value)
                })
                .collect();
            serde_json::to_string_pretty(&map).expect("report serializes") + "\n"
        }
        Format::Csv => pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect(),
    };
    print!("{text}");
    text
}

#[derive(Serialize)]
struct EnvelopeJsonRow {
    theta_pitch_deg: f64,
    dt_tau_min: Option<f64>,
    dt_tau_max: Option<f64>,
    tvc_tau_min: Option<f64>,
    tvc_tau_max: Option<f64>,
    feasible: bool,
}

fn envelope_json(rows: &[EnvelopeRow]) -> String {
    let pick = |r: &Result<EnvelopePoint, _>, max: bool| {
        r.as_ref()
            .ok()
            .map(|p: &EnvelopePoint| if max { p.tau_max } else { p.tau_min })
    };
    let out: Vec<EnvelopeJsonRow> = rows
        .iter()
        .map(|r| EnvelopeJsonRow {
            theta_pitch_deg: deg(r.theta_pitch),
            dt_tau_min: pick(&r.dt, false),
            dt_tau_max: pick(&r.dt, true),
            tvc_tau_min: pick(&r.tvc, false),
            tvc_tau_max: pick(&r.tvc, true),
            feasible: r.feasible(),
        })
        .collect();
    serde_json::to_string_pretty(&out).expect("rows serialize") + "\n"
}

fn cmd_envelope(ctx: &Context, postures: Option<&[String]>, writer: &mut Writer) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let names: Vec<String> = postures
        .map(|p| p.to_vec())
        .unwrap_or_else(|| cfg.envelope.postures.clone());
    let resolved = names
        .iter()
        .map(|n| resolve_posture(cfg, Some(n), "--postures"))
        .collect::<CliResult<Vec<_>>>()?;
    let g = &cfg.scenario.geometry;
    for posture in resolved {
        let geo =
            geometry_from_posture(&posture, g).map_err(|e| CliError::Config(e.to_string()))?;
        let mut c =
            EnvelopeConstraint::for_posture(&geo, &posture, &cfg.scenario.limits, Strategy::Tvc);
        if let Some(f) = cfg.envelope.min_vertical_force {
            c.min_vertical_force = f;
        }
        let rows = envelope_sweep(
            &geo,
            &c,
            cfg.envelope.theta_pitch_range,
            cfg.envelope.n_points,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        if rows.iter().all(|r| !r.feasible()) {
            return Err(CliError::Infeasible(format!(
                "posture {}: no sweep point meets the vertical force constraint",
                posture.name
            )));
        }
        let (name, body) = match ctx.format {
            Format::Csv => (
                format!("envelope_{}.csv", posture.name),
                envelope_csv(&rows),
            ),
            Format::Json => (
                format!("envelope_{}.json", posture.name),
                envelope_json(&rows),
            ),
        };
        writer.write(&name, body.as_bytes())?;
        match level_ratio(&geo, &c) {
            Ok(r) => println!(
                "tvc/dt ratio @0deg posture={} tau_max_ratio={:.4} tau_min_ratio={:.4} dt_tau_max={:.4} tvc_tau_max={:.4} dt_tau_min={:.4} tvc_tau_min={:.4} L_m={} L_f_m={}",
                posture.name,
                r.tau_max_ratio,
                r.tau_min_ratio,
                r.dt.tau_max,
                r.tvc.tau_max,
                r.dt.tau_min,
                r.tvc.tau_min,
                g.waist_spacing,
                g.feet_spacing
            ),
            Err(e) => println!("tvc/dt ratio @0deg posture={} unavailable: {e}", posture.name),
        }
    }
    Ok(())
}

fn cmd_takeoff(
    ctx: &mut Context,
    mode: Option<&str>,
    posture: Option<&str>,
    writer: &mut Writer,
) -> CliResult<()> {
    if let Some(m) = mode {
        ctx.cfg.scenario.mode = m
            .parse::<ControlMode>()
            .map_err(|e| CliError::Config(format!("--mode: {e}")))?;
    }
    if posture.is_some() {
        ctx.cfg.scenario.posture = resolve_posture(&ctx.cfg, posture, "--posture")?;
    }
    let sc = &ctx.cfg.scenario;
    let log = run_scenario(sc).map_err(|e| match e {
        ScenarioError::Trim(t) => CliError::Infeasible(t.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    let stem = format!("takeoff_{}", sc.mode.as_str());
    match ctx.format {
        Format::Csv => writer.write(&format!("{stem}.csv"), log.to_csv().as_bytes())?,
        Format::Json => {
            let rows = serde_json::to_string_pretty(&log.rows).expect("rows serialize") + "\n";
            writer.write(&format!("{stem}.json"), rows.as_bytes())?
        }
    };
    writer.write(
        &format!("{stem}_events.json"),
        (log.events_json() + "\n").as_bytes(),
    )?;
    let ev = &log.events;
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.4}"));
    println!(
        "mode={} posture={} liftoff_time_s={} altitude_at_2s_m={} max_abs_pitch_deg={:.3} max_abs_yaw_deg={:.3} diverged={}",
        sc.mode,
        sc.posture.name,
        opt(ev.liftoff_time_s),
        opt(ev.altitude_at_2s_m),
        ev.max_abs_pitch_deg,
        ev.max_abs_yaw_deg,
        ev.diverged
    );
    if ev.diverged {
        return Err(CliError::Diverged(format!(
            "divergence guard tripped at t = {:.4} s; partial outputs kept",
            ev.final_time_s
        )));
    }
    Ok(())
}

fn cmd_trim(ctx: &Context, posture: Option<&str>, differential: bool) -> CliResult<String> {
    let p = resolve_posture(&ctx.cfg, posture, "--posture")?;
    let geo = geometry_from_posture(&p, &ctx.cfg.scenario.geometry)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let t = hover_trim(&geo, &ctx.cfg.scenario.limits, !differential)
        .map_err(|e| CliError::Infeasible(e.to_string()))?;
    let fs = &t.fan_state;
    Ok(print_report(
        ctx.format,
        &[
            ("posture", p.name.clone()),
            ("equal_thrust", (!differential).to_string()),
            ("thrust_front_n", fmt_f(fs.f_front)),
            ("thrust_back_n", fmt_f(fs.f_back)),
            ("thrust_left_n", fmt_f(fs.f_left)),
            ("thrust_right_n", fmt_f(fs.f_right)),
            ("theta_left_deg", fmt_f(deg(fs.theta_left))),
            ("theta_right_deg", fmt_f(deg(fs.theta_right))),
            ("theta_pitch_deg", fmt_f(deg(t.theta_pitch))),
            ("residual_wrench_norm", format!("{:e}", t.residual_norm)),
            ("iterations", t.iterations.to_string()),
        ],
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_wrench_eval(
    ctx: &Context,
    posture: Option<&str>,
    thrusts: [f64; 4],
    theta: [f64; 2],
    attitude: [f64; 3],
) -> CliResult<String> {
    if thrusts
        .iter()
        .chain(&theta)
        .chain(&attitude)
        .any(|v| !v.is_finite())
    {
        return Err(CliError::Config(
            "wrench-eval arguments must be finite".into(),
        ));
    }
    let p = resolve_posture(&ctx.cfg, posture, "--posture")?;
    let geo = geometry_from_posture(&p, &ctx.cfg.scenario.geometry)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let fs = FanState {
        f_front: thrusts[0],
        f_back: thrusts[1],
        f_left: thrusts[2],
        f_right: thrusts[3],
        theta_left: rad(theta[0]),
        theta_right: rad(theta[1]),
    };
    let q = euler_to_quat(&EulerAngles::new(
        rad(attitude[0]),
        rad(attitude[1]),
        rad(attitude[2]),
    ));
    let w = generalized_wrench_3d(&fs, &geo, &q);
    Ok(print_report(
        ctx.format,
        &[
            ("posture", p.name.clone()),
            ("fx", fmt_f(w.force_world.x)),
            ("fy", fmt_f(w.force_world.y)),
            ("fz", fmt_f(w.force_world.z)),
            ("tx", fmt_f(w.torque_world.x)),
            ("ty", fmt_f(w.torque_world.y)),
            ("tz", fmt_f(w.torque_world.z)),
            ("ty1", fmt_f(w.t_y1)),
            ("ty2", fmt_f(w.t_y2)),
            ("ty3", fmt_f(w.t_y3)),
        ],
    ))
}

fn run(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    let mut ctx = load(&cli)?;
    let needs_files = matches!(
        cli.command,
        Command::Envelope { .. } | Command::Takeoff { .. }
    );
    let out_dir = match (&cli.out, needs_files) {
        (Some(dir), _) => Some(dir.clone()),
        (None, true) => Some(PathBuf::from("out")),
        (None, false) => None,
    };
    let mut writer = out_dir.map(Writer::new).transpose()?;
    let name = cli.command.name();

    let result = match &cli.command {
        Command::Envelope { postures } => cmd_envelope(
            &ctx,
            postures.as_deref(),
            writer.as_mut().expect("output dir"),
        ),
        Command::Takeoff { mode, posture } => cmd_takeoff(
            &mut ctx,
            mode.as_deref(),
            posture.as_deref(),
            writer.as_mut().expect("output dir"),
        ),
        Command::Trim {
            posture,
            differential,
        } => cmd_trim(&ctx, posture.as_deref(), *differential).and_then(|report| {
            if let Some(w) = writer.as_mut() {
                let ext = if ctx.format == Format::Json {
                    "json"
                } else {
                    "txt"
                };
                w.write(&format!("trim.{ext}"), report.as_bytes())?;
            }
            Ok(())
        }),
        Command::WrenchEval {
            posture,
            thrust_f,
            thrust_b,
            thrust_fl,
            thrust_fr,
            theta_l,
            theta_r,
            roll,
            pitch,
            yaw,
        } => cmd_wrench_eval(
            &ctx,
            posture.as_deref(),
            [*thrust_f, *thrust_b, *thrust_fl, *thrust_fr],
            [*theta_l, *theta_r],
            [*roll, *pitch, *yaw],
        )
        .and_then(|report| {
            if let Some(w) = writer.as_mut() {
                let ext = if ctx.format == Format::Json {
                    "json"
                } else {
                    "txt"
                };
                w.write(&format!("wrench.{ext}"), report.as_bytes())?;
            }
            Ok(())
        }),
    };

    // Partial outputs of a diverged run are still recorded.
    let keep = matches!(result, Ok(()) | Err(CliError::Diverged(_)));
    if let (Some(w), true) = (writer, keep) {
        let manifest = RunManifest {
            tool: "tvcflight",
            version: env!("CARGO_PKG_VERSION"),
            command: name.to_string(),
            args: std::env::args().skip(1).collect(),
            config: ctx.cfg.to_toml_string(),
            inputs: std::mem::take(&mut ctx.inputs),
            outputs: w.written,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(
            &w.dir.join(format!("manifest_{name}.json")),
            json.as_bytes(),
        )?;
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvcflight: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
