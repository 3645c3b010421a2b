//! Command-line front end: `simulate`, `step-study` and `analyze`.
//!
//! Every command renders all of its outputs in memory first and only then
//! writes them, each through a temporary file and a rename, so a failing
//! command leaves nothing behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{self, AnalysisReport, ScalingSet};
use crate::controllers::ControllerId;
use crate::numerics::{format_g9, Matrix};
use crate::plant::LinearModel;
use crate::platform::{run_platform, run_step_study, PlatformSetup, PlatformTrace, StepStudy, SwitchReason};
use crate::scenario::LoadedScenario;

pub const OUT_DIR_ENV: &str = "APC_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "apc", version, about = "Competing process controllers on a surge tank")]
pub struct Cli {
    /// Output directory (overrides the scenario's `output_dir`).
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Seed for the generated feed-density profile.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the switching platform on a scenario file.
    Simulate { scenario: PathBuf },
    /// Closed-loop response of one controller to a feed-density step.
    StepStudy {
        #[arg(long)]
        controller: u8,
        /// Size of the step in ρ_i, t/m³.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Gain multiplier on the water valve.
        #[arg(long, default_value_t = 1.1)]
        qw_gain: f64,
        /// Simulated time, hours.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
    },
    /// Controllability report and frequency sweeps.
    Analyze {
        /// TOML with matrices `a`, `b`, `gd` (and optionally `c`, `[scaling]`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// Rendered files, written together once everything succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    /// Printed on stdout after the files are written.
    pub stdout: String,
}

pub fn run(cli: Cli) -> Result<()> {
    let (outputs, dir) = match &cli.command {
        Command::Simulate { scenario } => {
            let loaded = LoadedScenario::load(scenario)?;
            let dir = cli
                .out
                .clone()
                .or_else(|| loaded.output_dir())
                .unwrap_or_else(|| DEFAULT_OUT_DIR.into());
            (simulate(&loaded, cli.seed)?, dir)
        }
        Command::StepStudy {
            controller,
            step,
            qw_gain,
            duration,
        } => {
            let id = ControllerId::new(*controller)?;
            let mut study = StepStudy::new(id, *step, *qw_gain);
            study.duration = *duration;
            (step_study(&study)?, out_dir(&cli))
        }
        Command::Analyze { model } => (analyze(model.as_deref())?, out_dir(&cli)),
    };
    write_outputs(&dir, &outputs.files)?;
    print!("{}", outputs.stdout);
    Ok(())
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| DEFAULT_OUT_DIR.into())
}

/// Write every file through `.<name>.tmp` and a rename.
pub fn write_outputs(dir: &Path, files: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let dst = dir.join(name);
        std::fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &dst).with_context(|| format!("renaming to {}", dst.display()))?;
    }
    Ok(())
}

pub const TRACE_HEADER: &str =
    "t_hours,r_v,r_rho,y_v,y_rho,u_qi_cmd,u_qw_cmd,u_qi_applied,u_qw_applied,rho_i,active_id";

pub fn trace_csv(trace: &PlatformTrace) -> String {
    let mut out = String::with_capacity(trace.samples.len() * 120);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for s in &trace.samples {
        let cells = [
            s.t,
            s.r.v,
            s.r.rho,
            s.y.v,
            s.y.rho,
            s.u_commanded.q_i,
            s.u_commanded.q_w,
            s.u_applied.q_i,
            s.u_applied.q_w,
            s.rho_i,
        ];
        for c in cells {
            out.push_str(&format_g9(c));
            out.push(',');
        }
        writeln!(out, "{}", s.active).unwrap();
    }
    out
}

/// One row per evaluation horizon: who was in control, each competitor's
/// simulated index and flag, and the controller selected for the next
/// horizon.
pub fn horizon_csv(setup: &PlatformSetup, trace: &PlatformTrace) -> Result<String> {
    let n = setup.selector.horizon_samples()?;
    let active = trace.active_per_horizon(n);
    let mut ids: Vec<ControllerId> = setup.controllers.clone();
    ids.sort();
    let mut out = String::from("horizon,t_start_hours,t_end_hours,active_id");
    for id in &ids {
        write!(out, ",j_{id},flagged_{id}").unwrap();
    }
    out.push_str(",selected_next\n");
    let horizons = trace.samples.len().div_ceil(n);
    for h in 0..horizons {
        let records = trace.horizon_records(h);
        let t0 = h as f64 * setup.selector.horizon;
        let t1 = ((h + 1) as f64 * setup.selector.horizon).min(setup.duration);
        write!(out, "{h},{},{},{}", format_g9(t0), format_g9(t1), active[h]).unwrap();
        for id in &ids {
            match records.iter().find(|r| r.id == *id) {
                Some(r) => write!(out, ",{},{}", format_g9(r.j), u8::from(r.flagged)).unwrap(),
                None => out.push_str(",,"),
            }
        }
        // the sample after the horizon shows the outcome of the selection
        let next = trace.samples.get((h + 1) * n).map(|s| s.active.to_string()).unwrap_or_default();
        writeln!(out, ",{next}").unwrap();
    }
    Ok(out)
}

fn simulation_summary(setup: &PlatformSetup, trace: &PlatformTrace) -> Result<String> {
    let sse = trace.sse(setup.selector.w_e);
    let n = setup.selector.horizon_samples()?;
    let du = trace.max_input_change(setup.initial_input);
    let mut out = String::new();
    writeln!(out, "samples: {}", trace.samples.len())?;
    writeln!(out, "horizons: {}", trace.samples.len().div_ceil(n))?;
    let ids: Vec<String> = setup.controllers.iter().map(|c| c.to_string()).collect();
    writeln!(out, "controllers: [{}]", ids.join(", "))?;
    writeln!(out, "SSE_rho: {}", format_g9(sse.sse_rho))?;
    writeln!(out, "SSE_v: {}", format_g9(sse.sse_v))?;
    writeln!(out, "SSE_tot: {}", format_g9(sse.total))?;
    writeln!(out, "max |du| q_i: {}", format_g9(du[0]))?;
    writeln!(out, "max |du| q_w: {}", format_g9(du[1]))?;
    let active: Vec<String> = trace.active_per_horizon(n).iter().map(|c| c.to_string()).collect();
    writeln!(out, "active per horizon: [{}]", active.join(", "))?;
    writeln!(out, "switches: {}", trace.switches.len())?;
    for s in &trace.switches {
        let reason = match s.reason {
            SwitchReason::Selection => "selection",
            SwitchReason::Fault => "fault",
            SwitchReason::ControllerError => "controller error",
        };
        writeln!(out, "  t = {} h: {} -> {} ({reason})", format_g9(s.t), s.from, s.to)?;
    }
    Ok(out)
}

pub fn simulate(loaded: &LoadedScenario, seed: Option<u64>) -> Result<Outputs> {
    let setup = loaded.setup(seed)?;
    let trace = run_platform(&setup)?;
    let summary = simulation_summary(&setup, &trace)?;
    Ok(Outputs {
        files: vec![
            ("trace.csv".into(), trace_csv(&trace)),
            ("horizons.csv".into(), horizon_csv(&setup, &trace)?),
            ("summary.txt".into(), summary.clone()),
        ],
        stdout: summary,
    })
}

pub fn step_study(study: &StepStudy) -> Result<Outputs> {
    let resp = run_step_study(study)?;
    let mut summary = String::new();
    writeln!(summary, "controller: {} ({})", study.controller, study.controller.name())?;
    writeln!(summary, "step in rho_i: {} at t = {} h", format_g9(study.step), format_g9(resp.t_step))?;
    writeln!(summary, "q_w gain: {}", format_g9(study.qw_gain))?;
    match resp.settling_time {
        Some(t) => writeln!(summary, "settling time (|e_rho| <= {}): {} h", format_g9(resp.band), format_g9(t))?,
        None => writeln!(summary, "settling time (|e_rho| <= {}): not settled", format_g9(resp.band))?,
    }
    writeln!(summary, "steady-state e_v: {}", format_g9(resp.steady_state_error[0]))?;
    writeln!(summary, "steady-state e_rho: {}", format_g9(resp.steady_state_error[1]))?;
    Ok(Outputs {
        files: vec![
            ("step_response.csv".into(), trace_csv(&resp.trace)),
            ("step_summary.txt".into(), summary.clone()),
        ],
        stdout: summary,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    gd: Vec<Vec<f64>>,
    c: Option<Vec<Vec<f64>>>,
    scaling: Option<ScalingFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingFile {
    d_y: Vec<f64>,
    d_u: Vec<f64>,
    d_d: Vec<f64>,
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        bail!("matrix `{name}` must be a non-empty list of equal-length rows");
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Load a model file; without `[scaling]` the model is analyzed unscaled.
pub fn load_model(path: &Path) -> Result<(LinearModel, ScalingSet)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let a = matrix(&file.a, "a")?;
    let b = matrix(&file.b, "b")?;
    let gd = matrix(&file.gd, "gd")?;
    let c = match &file.c {
        Some(c) => matrix(c, "c")?,
        None => Matrix::identity(a.nrows(), a.nrows()),
    };
    let scaling = match file.scaling {
        Some(s) => ScalingSet {
            d_y: s.d_y,
            d_u: s.d_u,
            d_d: s.d_d,
        },
        None => ScalingSet::identity(c.nrows(), b.ncols(), gd.ncols()),
    };
    Ok((LinearModel { a, b, gd, c }, scaling))
}

fn rejection_csv(report: &AnalysisReport) -> String {
    let width = report.scaled_gd.cols() * report.scaled_g.cols();
    let mut out = String::from("omega");
    for k in 1..=width {
        write!(out, ",m{k}").unwrap();
    }
    out.push('\n');
    for p in &report.rejection {
        out.push_str(&format_g9(p.omega));
        match &p.magnitudes {
            Some(m) => m.iter().for_each(|x| {
                out.push(',');
                out.push_str(&format_g9(*x));
            }),
            // singular frequency
            None => (0..width).for_each(|_| out.push_str(",nan")),
        }
        out.push('\n');
    }
    out
}

pub fn analyze(model: Option<&Path>) -> Result<Outputs> {
    let (model, scaling) = match model {
        Some(path) => load_model(path)?,
        None => (LinearModel::canonical(), ScalingSet::canonical()),
    };
    let report = analysis::analyze(&model, &scaling, &analysis::default_frequency_grid())?;
    let text = report.to_string();
    Ok(Outputs {
        files: vec![
            ("analysis.txt".into(), text.clone()),
            ("sweep_g.csv".into(), analysis::sweep_csv(&report.g_sweep)),
            ("sweep_gd.csv".into(), analysis::sweep_csv(&report.gd_sweep)),
            ("rejection.csv".into(), rejection_csv(&report)),
        ],
        stdout: text,
    })
}

