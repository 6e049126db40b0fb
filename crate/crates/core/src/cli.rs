//! Command-line entry point. Tables go to stdout (or `--output`) as CSV, summaries
//! to `--summary` as JSON; floats carry 12 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ac_zeeman::{differential_shift_vs_du, spatial_shift_slope};
use crate::analysis::fit_quadratic_origin;
use crate::config::{Config, ConfigError};
use crate::dynamics::{
    calibrate_quasi_static, coherence_grid, ramsey_contrast_scan, spin_echo_acz_scan, stabilization_loop,
    EchoScan, RamseyScan,
};
use crate::hyperfine::{find_clock_field, quadratic_coefficient, TransitionSpec, TransitionTag};
use crate::magnetics::{assembly_field_3d, gradient_bound, homogeneity_dsv, Vec3};
use crate::units::{Field, Length, Time};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ionfield", version, about = "Permanent-magnet quantisation field and trapped-ion benchmarks")]
pub struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Write a JSON summary with fit results.
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapAxis {
    Z,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Field of the magnet assembly along the axis or on a cubic grid.
    FieldMap {
        #[arg(long, value_enum, default_value = "z")]
        axis: MapAxis,
        /// Half-width of the sampled region.
        #[arg(long, default_value = "5 mm")]
        range: Length,
        #[arg(long, default_value = "0.1 mm")]
        step: Length,
    },
    /// Diameter of the homogeneous spherical volume and the gradient bound.
    Dsv {
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Radius of the ball searched for the largest gradient.
        #[arg(long, default_value = "2 mm")]
        displacement: Length,
    },
    /// Frequencies, sensitivities and curvatures of the four transitions.
    Transitions {
        #[arg(long = "B")]
        field: Option<Field>,
    },
    /// Field at which a transition is first-order field independent.
    ClockField {
        #[arg(long, default_value = "MW2")]
        transition: TransitionTag,
    },
    /// a.c. Zeeman sensing chain at the operating point.
    SenseAcz {
        /// Points of the ΔU_RF sweep.
        #[arg(long, default_value_t = 9)]
        points: usize,
    },
    /// Ramsey coherence scan under the configured field noise.
    RamseySim {
        #[arg(long, default_value = "MW2")]
        transition: TransitionTag,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shots: Option<u32>,
        /// Overrides the calibrated quasi-static rms.
        #[arg(long)]
        quasi_static: Option<Field>,
    },
    /// Spin-echo a.c. Zeeman phase against arm duration.
    EchoSim {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shots: Option<u32>,
    },
    /// Closed-loop field stabilisation over the configured duration.
    StabilizeSim {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        interval: Option<Time>,
        #[arg(long)]
        open_loop: bool,
    },
}

/// Table and optional summary produced by a subcommand.
#[derive(Debug, Default)]
pub struct Output {
    pub table: String,
    pub summary: Option<Value>,
}

pub fn fmt_f(x: f64) -> String {
    // no signed zeros in output
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

/// Rounds every float in a JSON tree to 12 significant digits.
fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let r: f64 = fmt_f(x).parse().unwrap_or(x);
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn transition_spec(cfg: &Config, tag: TransitionTag) -> Result<TransitionSpec, CliError> {
    cfg.transition(tag, cfg.operating_point.field.si()).map_err(numerical)
}

/// Quasi-static rms from the config, or calibrated on the evenly spaced grid up to `t_max`.
pub fn resolve_quasi_static(cfg: &Config) -> Result<f64, CliError> {
    if let Some(q) = cfg.noise.quasi_static_rms {
        return Ok(q.si());
    }
    let t = transition_spec(cfg, cfg.noise.calibration_transition)?;
    let n = cfg.simulation.t_points;
    let t_max = cfg.simulation.t_max.si();
    let grid: Vec<f64> = (1..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let sigma = calibrate_quasi_static(&t, cfg.noise.target_tau.si(), &grid).map_err(numerical)?;
    info!("calibrated quasi-static rms {} T", fmt_f(sigma));
    Ok(sigma)
}

pub fn execute(cfg: &Config, command: &Command) -> Result<Output, CliError> {
    match command {
        Command::FieldMap { axis, range, step } => field_map(cfg, *axis, range.si(), step.si()),
        Command::Dsv {
            tolerance,
            displacement,
        } => {
            let assembly = cfg.assembly().map_err(ConfigError::from)?;
            let report = homogeneity_dsv(&assembly, *tolerance).map_err(numerical)?;
            let grad = gradient_bound(&assembly, displacement.si()).map_err(numerical)?;
            let table = csv(
                &["d_dsv_m", "tolerance", "center_field_T", "max_gradient_T_per_m", "gradient_bound_T_per_m"],
                [vec![
                    fmt_f(report.d_dsv),
                    fmt_f(report.tolerance),
                    fmt_f(report.center_field),
                    fmt_f(report.max_gradient),
                    fmt_f(grad),
                ]],
            );
            Ok(Output {
                table,
                summary: Some(json!({ "homogeneity": to_json(&report), "displacement_m": displacement.si(), "gradient_bound_T_per_m": grad })),
            })
        }
        Command::Transitions { field } => {
            let b = field.map_or(cfg.operating_point.field.si(), |f| f.si());
            let specs = TransitionTag::ALL
                .iter()
                .map(|&tag| cfg.transition(tag, b))
                .collect::<Result<Vec<_>, _>>()
                .map_err(numerical)?;
            let table = csv(
                &[
                    "transition",
                    "lower",
                    "upper",
                    "frequency_Hz",
                    "sensitivity_Hz_per_T",
                    "curvature_Hz_per_T2",
                    "coupling_Hz",
                ],
                specs.iter().map(|s| {
                    vec![
                        s.tag.to_string(),
                        format!("\"{}\"", s.lower),
                        format!("\"{}\"", s.upper),
                        fmt_f(s.frequency),
                        fmt_f(s.sensitivity),
                        fmt_f(s.curvature),
                        fmt_f(s.coupling_strength),
                    ]
                }),
            );
            Ok(Output {
                table,
                summary: Some(json!({ "field_T": b, "transitions": to_json(&specs) })),
            })
        }
        Command::ClockField { transition } => {
            let sys = cfg.hyperfine_system().map_err(ConfigError::from)?;
            let labels = transition.labels();
            let b = find_clock_field(&sys, labels, cfg.operating_point.field.si()).map_err(numerical)?;
            let q = quadratic_coefficient(&sys, b, labels).map_err(numerical)?;
            let spec = cfg.transition(*transition, b).map_err(numerical)?;
            let table = csv(
                &["transition", "clock_field_T", "frequency_Hz", "quadratic_coefficient_Hz_per_T2"],
                [vec![transition.to_string(), fmt_f(b), fmt_f(spec.frequency), fmt_f(q)]],
            );
            Ok(Output {
                table,
                summary: Some(json!({ "transition": transition, "clock_field_T": b, "quadratic_coefficient_Hz_per_T2": q })),
            })
        }
        Command::SenseAcz { points } => sense_acz(cfg, *points),
        Command::RamseySim {
            transition,
            seed,
            shots,
            quasi_static,
        } => {
            let sigma = match quasi_static {
                Some(q) => q.si(),
                None => resolve_quasi_static(cfg)?,
            };
            let noise = cfg.noise_model(sigma);
            let spec = transition_spec(cfg, *transition)?;
            let sim = &cfg.simulation;
            let scan = RamseyScan {
                t_grid: coherence_grid(&spec, &noise, sim.t_points, sim.t_max.si()),
                phases: sim.phases,
                shots: shots.unwrap_or(sim.shots),
                float_baseline: sim.float_baseline,
                pulse_model: sim.pulse_model,
                seed: seed.unwrap_or(sim.seed),
            };
            if scan.shots == 0 {
                return Err(CliError::Usage("--shots must be at least 1".into()));
            }
            let res = ramsey_contrast_scan(&spec, &noise, &scan).map_err(numerical)?;
            let table = csv(
                &["t_s", "contrast", "contrast_err", "phase_rad"],
                res.points
                    .iter()
                    .map(|p| vec![fmt_f(p.t), fmt_f(p.contrast), fmt_f(p.contrast_err), fmt_f(p.phase)]),
            );
            Ok(Output {
                table,
                summary: Some(json!({
                    "transition": transition,
                    "seed": scan.seed,
                    "shots": scan.shots,
                    "noise": to_json(&noise),
                    "fit": to_json(&res.decay),
                    "tau_s": res.tau,
                    "tau_err_s": res.tau_err,
                    "gamma_rad_per_s": res.gamma,
                    "gamma_err_rad_per_s": res.gamma_err,
                })),
            })
        }
        Command::EchoSim { seed, shots } => {
            let sim = &cfg.simulation;
            let sigma = resolve_quasi_static(cfg)?;
            let noise = cfg.noise_model(sigma);
            let spec = transition_spec(cfg, TransitionTag::MW2)?;
            let run = cfg.sensing_run().map_err(numerical)?;
            let scan = EchoScan::geometric(
                sim.echo_first_arm.si(),
                sim.echo_last_arm.si(),
                shots.unwrap_or(sim.shots),
                seed.unwrap_or(sim.seed),
            );
            let res = spin_echo_acz_scan(&spec, &run, &noise, &scan).map_err(numerical)?;
            let table = csv(
                &["t_p_s", "phase_rad", "phase_err_rad", "p_0", "p_90"],
                res.points.iter().map(|p| {
                    vec![
                        fmt_f(p.t_p),
                        fmt_f(p.phase),
                        fmt_f(p.phase_err),
                        fmt_f(p.quadratures[0]),
                        fmt_f(p.quadratures[1]),
                    ]
                }),
            );
            Ok(Output {
                table,
                summary: Some(json!({
                    "seed": scan.seed,
                    "sensing_run": to_json(&run),
                    "fit": to_json(&res.slope_fit),
                    "phase_rate_rad_per_s": res.phase_rate,
                    "phase_rate_err_rad_per_s": res.phase_rate_err,
                    "differential_shift_Hz": res.differential_shift,
                    "expected_shift_Hz": res.expected_shift,
                })),
            })
        }
        Command::StabilizeSim {
            seed,
            interval,
            open_loop,
        } => {
            let mut st = cfg.stabilization();
            if let Some(s) = seed {
                st.seed = *s;
            }
            if let Some(i) = interval {
                st.interval = i.si();
            }
            st.closed_loop = st.closed_loop && !open_loop;
            let proxy = transition_spec(cfg, TransitionTag::MW0)?;
            let noise = cfg.noise_model(0.0);
            let trace = stabilization_loop(&st, &proxy, &noise).map_err(|e| match e {
                crate::dynamics::DynamicsError::RangeError(m) => CliError::Usage(m),
                other => numerical(other),
            })?;
            let table = csv(
                &["t_s", "field_T", "proxy_frequency_Hz", "current_A", "relative_deviation"],
                trace.samples.iter().map(|s| {
                    vec![
                        fmt_f(s.t),
                        fmt_f(s.field),
                        fmt_f(s.proxy_frequency),
                        fmt_f(s.current),
                        fmt_f(s.relative_deviation),
                    ]
                }),
            );
            Ok(Output {
                table,
                summary: Some(json!({
                    "interval_s": st.interval,
                    "closed_loop": st.closed_loop,
                    "rms_relative_deviation": trace.rms_relative_deviation,
                    "max_relative_deviation": trace.max_relative_deviation,
                    "open_loop_drift_per_hour": trace.open_loop_drift_per_hour,
                    "corrections": to_json(&trace.corrections),
                })),
            })
        }
    }
}

fn field_map(cfg: &Config, axis: MapAxis, range: f64, step: f64) -> Result<Output, CliError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(CliError::Usage(format!("--range must be positive, got {range} m")));
    }
    if !(step > 0.0 && step <= range) {
        return Err(CliError::Usage(format!("--step must lie in (0, range], got {step} m")));
    }
    let assembly = cfg.assembly().map_err(ConfigError::from)?;
    let m = (range / step + 1e-9).floor() as i64;
    let ks: Vec<i64> = (-m..=m).collect();
    let points: Vec<Vec3> = match axis {
        MapAxis::Z => ks.iter().map(|&k| Vec3::new(0.0, 0.0, k as f64 * step)).collect(),
        MapAxis::ThreeD => {
            let mut p = Vec::with_capacity(ks.len().pow(3));
            for &i in &ks {
                for &j in &ks {
                    for &k in &ks {
                        p.push(Vec3::new(i as f64 * step, j as f64 * step, k as f64 * step));
                    }
                }
            }
            p
        }
    };
    let fields = points
        .par_iter()
        .map(|r| assembly_field_3d(r, &assembly))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;
    let table = csv(
        &["x_m", "y_m", "z_m", "bx_T", "by_T", "bz_T", "b_T"],
        points.iter().zip(&fields).map(|(r, b)| {
            vec![
                fmt_f(r.x),
                fmt_f(r.y),
                fmt_f(r.z),
                fmt_f(b.x),
                fmt_f(b.y),
                fmt_f(b.z),
                fmt_f(b.norm()),
            ]
        }),
    );
    Ok(Output { table, summary: None })
}

fn sense_acz(cfg: &Config, points: usize) -> Result<Output, CliError> {
    if points < 3 {
        return Err(CliError::Usage(format!("--points must be at least 3, got {points}")));
    }
    let op = &cfg.operating_point;
    let run = cfg.sensing_run().map_err(numerical)?;
    let u = run.u_rf;
    let sweep: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let du = u * k as f64 / (points - 1) as f64;
            differential_shift_vs_du(run.inferred_bosc, u, du, run.quadratic_sensitivity).map(|d| (du, d))
        })
        .collect::<Result<_, _>>()
        .map_err(numerical)?;
    let x: Vec<f64> = sweep.iter().map(|p| p.0).collect();
    let y: Vec<f64> = sweep.iter().map(|p| p.1).collect();
    let fit = fit_quadratic_origin(&x, &y, &vec![1e-3; x.len()], false).map_err(numerical)?;
    let spatial = spatial_shift_slope(run.quadratic_sensitivity, op.spatial_coefficient.0);
    let mut table = String::from("delta_u_rf_V,differential_shift_Hz\n");
    for (du, d) in &sweep {
        let _ = writeln!(table, "{},{}", fmt_f(*du), fmt_f(*d));
    }
    Ok(Output {
        table,
        summary: Some(json!({
            "acz_sensitivity_Hz_per_T2": run.quadratic_sensitivity,
            "inferred_bosc_T": run.inferred_bosc,
            "differential_shift_Hz": run.differential_shift().map_err(numerical)?,
            "phase_rate_rad_per_s": run.phase_rate().map_err(numerical)?,
            "spatial_shift_slope_Hz_per_m": spatial,
            "quadratic_fit": to_json(&fit),
        })),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    info!("resolved configuration:\n{cfg}");
    let out = execute(&cfg, &cli.command)?;
    match &cli.output {
        Some(p) => write_file(p, &out.table)?,
        None => print!("{}", out.table),
    }
    if let (Some(p), Some(summary)) = (&cli.summary, out.summary) {
        let text = serde_json::to_string_pretty(&round_floats(summary)).map_err(numerical)?;
        write_file(p, &(text + "\n"))?;
    }
    Ok(())
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
