//! The selector: closed-loop simulation of every competing controller over
//! each evaluation horizon, scoring, switching, plant-side constraint
//! enforcement and the local fallback.

use nalgebra::Vector2;
use rayon::prelude::*;
use thiserror::Error;

use crate::controllers::{ControlError, ControllerId, ControllerIo, DualController, DEFAULT_REFERENCE};
use crate::plant::{
    sample_disturbance, step_plant, ActuatorUncertainty, ControlInput, Disturbance, DisturbanceProfile,
    OperatingPoint, PlantError, PlantState, QI_BOUNDS, QW_BOUNDS, RATE_LIMIT,
};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("invalid switching configuration: {0}")]
    Config(String),
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error("run failed at t = {t:.4} h: {source}")]
    Run {
        t: f64,
        source: Box<PlatformError>,
        trace: Box<PlatformTrace>,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    ErrorOnly,
    ErrorPlusMove,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorConfig {
    /// Evaluation horizon, hours.
    pub horizon: f64,
    pub w_e: [f64; 2],
    pub w_u: [f64; 2],
    pub index: IndexKind,
    pub dt: f64,
    /// Minimum closed-loop bandwidth required of competitors, rad/h.
    pub bandwidth: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            w_e: [1e-3, 1.0],
            w_u: [0.0, 0.0],
            index: IndexKind::ErrorOnly,
            dt: 0.002,
            bandwidth: 100.0,
        }
    }
}

impl SelectorConfig {
    pub fn horizon_samples(&self) -> Result<usize, PlatformError> {
        samples_in(self.horizon, self.dt, "evaluation horizon")
    }
}

fn samples_in(span: f64, dt: f64, what: &str) -> Result<usize, PlatformError> {
    if !(dt > 0.0 && span > 0.0) {
        return Err(PlatformError::Config(format!("{what} {span} h and dt {dt} h must be positive")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(1.0) || n < 1.0 {
        return Err(PlatformError::Config(format!("{what} {span} h is not a whole number of {dt} h samples")));
    }
    Ok(n as usize)
}

/// Horizon must cover ten closed-loop time constants `1/ω_B`, and the
/// sampling must satisfy `0.2 ≤ ω_B·dt ≤ 0.6`.
pub fn validate_switching_config(cfg: &SelectorConfig) -> Result<(), PlatformError> {
    if !(cfg.bandwidth > 0.0 && cfg.bandwidth.is_finite()) {
        return Err(PlatformError::Config(format!("bandwidth must be positive, got {}", cfg.bandwidth)));
    }
    let wdt = cfg.bandwidth * cfg.dt;
    // small slack so the boundary values themselves are accepted
    if !(0.2 - 1e-12..=0.6 + 1e-12).contains(&wdt) {
        return Err(PlatformError::Config(format!(
            "ω_B·dt = {wdt:.4} is outside [0.2, 0.6] (ω_B = {} rad/h, dt = {} h)",
            cfg.bandwidth, cfg.dt
        )));
    }
    let slow = 10.0 / cfg.bandwidth;
    if cfg.horizon < slow {
        return Err(PlatformError::Config(format!(
            "evaluation horizon {} h is shorter than ten closed-loop time constants ({slow:.4} h)",
            cfg.horizon
        )));
    }
    for (name, w) in [("W_e", cfg.w_e), ("W_u", cfg.w_u)] {
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(PlatformError::Config(format!("{name} must be finite and nonnegative, got {w:?}")));
        }
    }
    cfg.horizon_samples()?;
    Ok(())
}

/// `Σ (r−y)ᵀ W_e (r−y)`, plus `Σ Δuᵀ W_u Δu` for the move-penalized kind.
/// `u` starts with the input applied before the window, so it is one
/// longer than `y` when moves are penalized.
pub fn performance_index(
    r: &[PlantState],
    y: &[PlantState],
    u: &[ControlInput],
    w_e: [f64; 2],
    w_u: [f64; 2],
    kind: IndexKind,
) -> Result<f64, PlatformError> {
    if r.len() != y.len() {
        return Err(PlatformError::LengthMismatch(format!("{} references, {} outputs", r.len(), y.len())));
    }
    let mut j = 0.0;
    for (ri, yi) in r.iter().zip(y) {
        let e = ri.to_vector() - yi.to_vector();
        j += w_e[0] * e[0] * e[0] + w_e[1] * e[1] * e[1];
    }
    if kind == IndexKind::ErrorPlusMove {
        if u.len() != y.len() + 1 {
            return Err(PlatformError::LengthMismatch(format!(
                "{} inputs for {} outputs (need the previous input too)",
                u.len(),
                y.len()
            )));
        }
        for w in u.windows(2) {
            let du = w[1].to_vector() - w[0].to_vector();
            j += w_u[0] * du[0] * du[0] + w_u[1] * du[1] * du[1];
        }
    }
    Ok(j)
}

/// Clamp to the actuator box, then to the per-sample rate limit. The flag
/// reports whether anything was changed.
pub fn enforce_constraints(u_cmd: ControlInput, u_prev: ControlInput) -> (ControlInput, bool) {
    let boxed = ControlInput::new(
        u_cmd.q_i.clamp(QI_BOUNDS.0, QI_BOUNDS.1),
        u_cmd.q_w.clamp(QW_BOUNDS.0, QW_BOUNDS.1),
    );
    let rate = |c: f64, p: f64| c.clamp(p - RATE_LIMIT, p + RATE_LIMIT);
    let applied = ControlInput::new(rate(boxed.q_i, u_prev.q_i), rate(boxed.q_w, u_prev.q_w));
    (applied, applied != u_cmd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationRecord {
    pub horizon: usize,
    pub id: ControllerId,
    pub j: f64,
    pub flagged: bool,
    pub sse_v: f64,
    pub sse_rho: f64,
}

/// Lowest index among unflagged records; exact ties keep the incumbent.
/// With every record flagged (or none given) the local controller is
/// chosen.
pub fn select(records: &[EvaluationRecord], incumbent: ControllerId) -> ControllerId {
    let mut best: Option<&EvaluationRecord> = None;
    for rec in records.iter().filter(|r| !r.flagged && r.j.is_finite()) {
        best = match best {
            None => Some(rec),
            Some(b) if rec.j < b.j || (rec.j == b.j && rec.id == incumbent) => Some(rec),
            keep => keep,
        };
    }
    best.map_or(ControllerId::LOCAL_PI, |r| r.id)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInterval {
    pub start: f64,
    pub end: f64,
}

impl FaultInterval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSetup {
    pub duration: f64,
    pub selector: SelectorConfig,
    pub reference: PlantState,
    pub initial_state: PlantState,
    pub initial_input: ControlInput,
    pub q_o: f64,
    pub uncertainty: ActuatorUncertainty,
    pub disturbance: DisturbanceProfile,
    /// Controllers scored by the selector. The local controller is always
    /// kept as the fallback even when it does not compete.
    pub controllers: Vec<ControllerId>,
    pub faults: Vec<FaultInterval>,
}

impl PlatformSetup {
    /// Six hours on the generated feed-density profile with a 10% gain
    /// error on the water valve and all four controllers competing.
    pub fn canonical(seed: u64) -> Self {
        let op = OperatingPoint::canonical();
        Self {
            duration: 6.0,
            selector: SelectorConfig::default(),
            reference: DEFAULT_REFERENCE,
            initial_state: op.state,
            initial_input: op.input,
            q_o: op.q_o,
            uncertainty: ActuatorUncertainty { q_i: 1.0, q_w: 1.1 },
            disturbance: DisturbanceProfile::canonical(seed),
            controllers: ControllerId::ALL.to_vec(),
            faults: Vec::new(),
        }
    }

    pub fn samples(&self) -> Result<usize, PlatformError> {
        samples_in(self.duration, self.selector.dt, "duration")
    }

    pub fn validate(&self) -> Result<(), PlatformError> {
        validate_switching_config(&self.selector)?;
        self.samples()?;
        if self.disturbance.duration() + 1e-9 < self.duration {
            return Err(PlatformError::Config(format!(
                "disturbance profile covers {} h but the run lasts {} h",
                self.disturbance.duration(),
                self.duration
            )));
        }
        if self.controllers.is_empty() {
            return Err(PlatformError::Config("no controllers enabled".into()));
        }
        for f in &self.faults {
            if !(f.start >= 0.0 && f.end > f.start) {
                return Err(PlatformError::Config(format!("fault interval [{}, {}) is empty", f.start, f.end)));
            }
        }
        Ok(())
    }

    fn fault_at(&self, t: f64) -> bool {
        self.faults.iter().any(|f| f.contains(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub r: PlantState,
    pub y: PlantState,
    pub u_commanded: ControlInput,
    pub u_applied: ControlInput,
    pub rho_i: f64,
    pub active: ControllerId,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchReason {
    Selection,
    Fault,
    ControllerError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub sample: usize,
    pub t: f64,
    pub from: ControllerId,
    pub to: ControllerId,
    pub reason: SwitchReason,
}

/// Whole-run squared errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SseTotals {
    pub sse_v: f64,
    pub sse_rho: f64,
    /// `W_e`-weighted total.
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlatformTrace {
    pub dt: f64,
    pub samples: Vec<SampleRecord>,
    pub evaluations: Vec<EvaluationRecord>,
    pub switches: Vec<SwitchEvent>,
}

impl PlatformTrace {
    pub fn sse(&self, w_e: [f64; 2]) -> SseTotals {
        let (mut sv, mut sr) = (0.0, 0.0);
        for s in &self.samples {
            let e = s.r.to_vector() - s.y.to_vector();
            sv += e[0] * e[0];
            sr += e[1] * e[1];
        }
        SseTotals {
            sse_v: sv,
            sse_rho: sr,
            total: w_e[0] * sv + w_e[1] * sr,
        }
    }

    /// Largest per-sample change of each applied input over the run,
    /// starting from `u0`.
    pub fn max_input_change(&self, u0: ControlInput) -> [f64; 2] {
        let mut prev = u0;
        let mut out = [0.0f64; 2];
        for s in &self.samples {
            out[0] = out[0].max((s.u_applied.q_i - prev.q_i).abs());
            out[1] = out[1].max((s.u_applied.q_w - prev.q_w).abs());
            prev = s.u_applied;
        }
        out
    }

    /// Active controller for each evaluation horizon, taken at its first
    /// sample.
    pub fn active_per_horizon(&self, horizon_samples: usize) -> Vec<ControllerId> {
        self.samples.iter().step_by(horizon_samples.max(1)).map(|s| s.active).collect()
    }

    pub fn horizon_records(&self, horizon: usize) -> Vec<EvaluationRecord> {
        self.evaluations.iter().filter(|e| e.horizon == horizon).cloned().collect()
    }
}

/// A competitor's closed loop inside the selector.
struct SimLoop {
    state: PlantState,
    u_prev: ControlInput,
    broken: bool,
}

struct Entry {
    id: ControllerId,
    competing: bool,
    dual: DualController,
    sim: SimLoop,
}

/// Simulated outputs and inputs of one controller over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub y: Vec<PlantState>,
    pub u: Vec<ControlInput>,
}

struct HorizonContext<'a> {
    setup: &'a PlatformSetup,
    start: usize,
    len: usize,
    horizon: usize,
}

fn simulate_entry(entry: &mut Entry, ctx: &HorizonContext<'_>, plant_state: PlantState, plant_u: ControlInput) -> (EvaluationRecord, SimulatedTrace) {
    let setup = ctx.setup;
    let dt = setup.selector.dt;
    if entry.sim.broken {
        // resynchronize a loop that failed earlier with the real plant
        entry.sim = SimLoop {
            state: plant_state,
            u_prev: plant_u,
            broken: false,
        };
        entry.dual.sim_side_mut().reset();
        let io = ControllerIo {
            r: setup.reference,
            y: plant_state,
            u_applied_prev: plant_u,
            dt,
        };
        entry.dual.sim_side_mut().back_initialize(&io);
    }
    let mut flagged = false;
    let mut ys = Vec::with_capacity(ctx.len);
    let mut us = Vec::with_capacity(ctx.len + 1);
    us.push(entry.sim.u_prev);
    let unperturbed = ActuatorUncertainty::identity();
    for k in ctx.start..ctx.start + ctx.len {
        let t = k as f64 * dt;
        let y = entry.sim.state;
        ys.push(y);
        if entry.sim.broken {
            us.push(entry.sim.u_prev);
            continue;
        }
        let io = ControllerIo {
            r: setup.reference,
            y,
            u_applied_prev: entry.sim.u_prev,
            dt,
        };
        let cmd = match entry.dual.sim_sample(&io) {
            Ok(u) => u,
            Err(_) => {
                flagged = true;
                entry.sim.u_prev
            }
        };
        let (applied, clamped) = enforce_constraints(cmd, entry.sim.u_prev);
        flagged |= clamped;
        let next = sample_disturbance(&setup.disturbance, t)
            .and_then(|d| step_plant(y, applied, setup.q_o, d, &unperturbed, dt));
        match next {
            Ok(x) => entry.sim.state = x,
            Err(_) => {
                flagged = true;
                entry.sim.broken = true;
            }
        }
        entry.sim.u_prev = applied;
        us.push(applied);
    }
    let refs = vec![setup.reference; ys.len()];
    let sel = &setup.selector;
    let j = performance_index(&refs, &ys, &us, sel.w_e, sel.w_u, sel.index).unwrap_or(f64::INFINITY);
    let (mut sse_v, mut sse_rho) = (0.0, 0.0);
    for y in &ys {
        let e = setup.reference.to_vector() - y.to_vector();
        sse_v += e[0] * e[0];
        sse_rho += e[1] * e[1];
    }
    (
        EvaluationRecord {
            horizon: ctx.horizon,
            id: entry.id,
            j,
            flagged,
            sse_v,
            sse_rho,
        },
        SimulatedTrace { y: ys, u: us },
    )
}

/// Run every competing controller's closed loop over one horizon on the
/// uncertainty-free nonlinear model with the measured disturbance.
fn evaluate_horizon(
    entries: &mut [Entry],
    ctx: &HorizonContext<'_>,
    plant_state: PlantState,
    plant_u: ControlInput,
) -> Vec<(EvaluationRecord, SimulatedTrace)> {
    entries
        .par_iter_mut()
        .filter(|e| e.competing)
        .map(|e| simulate_entry(e, ctx, plant_state, plant_u))
        .collect()
}

fn build_entries(setup: &PlatformSetup) -> Result<Vec<Entry>, PlatformError> {
    let mut ids = setup.controllers.clone();
    ids.sort();
    ids.dedup();
    let mut entries = Vec::new();
    if !ids.contains(&ControllerId::LOCAL_PI) {
        entries.push((ControllerId::LOCAL_PI, false));
    }
    entries.extend(ids.into_iter().map(|id| (id, true)));
    entries.sort_by_key(|(id, _)| *id);
    let dt = setup.selector.dt;
    entries
        .into_iter()
        .map(|(id, competing)| {
            let mut dual = DualController::from_registry(id, dt)?;
            let io = ControllerIo {
                r: setup.reference,
                y: setup.initial_state,
                u_applied_prev: setup.initial_input,
                dt,
            };
            dual.activate(&io);
            dual.sim_side_mut().back_initialize(&io);
            Ok(Entry {
                id,
                competing,
                dual,
                sim: SimLoop {
                    state: setup.initial_state,
                    u_prev: setup.initial_input,
                    broken: false,
                },
            })
        })
        .collect()
}

enum Mode {
    Platform,
    Standalone(ControllerId),
}

/// Run the selector-driven platform on the scenario.
pub fn run_platform(setup: &PlatformSetup) -> Result<PlatformTrace, PlatformError> {
    run(setup, Mode::Platform)
}

/// Run one controller alone on the plant, with the same constraint
/// enforcement and without selection.
pub fn run_standalone(setup: &PlatformSetup, id: ControllerId) -> Result<PlatformTrace, PlatformError> {
    run(setup, Mode::Standalone(id))
}

fn run(setup: &PlatformSetup, mode: Mode) -> Result<PlatformTrace, PlatformError> {
    setup.validate()?;
    let dt = setup.selector.dt;
    let total = setup.samples()?;
    let per_horizon = setup.selector.horizon_samples()?;
    let mut local_setup;
    let setup = match mode {
        Mode::Platform => setup,
        Mode::Standalone(id) => {
            local_setup = setup.clone();
            local_setup.controllers = vec![id];
            &local_setup
        }
    };
    let mut entries = build_entries(setup)?;
    let index_of = |entries: &[Entry], id: ControllerId| entries.iter().position(|e| e.id == id);
    let mut active = match mode {
        Mode::Platform => ControllerId::LOCAL_PI,
        Mode::Standalone(id) => id,
    };
    let mut trace = PlatformTrace {
        dt,
        ..Default::default()
    };
    let mut x = setup.initial_state;
    let mut u_prev = setup.initial_input;

    let fail = |trace: &PlatformTrace, t: f64, err: PlatformError| PlatformError::Run {
        t,
        source: Box::new(err),
        trace: Box::new(trace.clone()),
    };

    let mut k = 0;
    let mut horizon = 0;
    while k < total {
        let len = per_horizon.min(total - k);
        let ctx = HorizonContext {
            setup,
            start: k,
            len,
            horizon,
        };
        if matches!(mode, Mode::Platform) {
            let mut results = evaluate_horizon(&mut entries, &ctx, x, u_prev);
            results.sort_by_key(|(r, _)| r.id);
            trace.evaluations.extend(results.into_iter().map(|(r, _)| r));
        }

        for kk in k..k + len {
            let t = kk as f64 * dt;
            let d: Disturbance = sample_disturbance(&setup.disturbance, t).map_err(|e| fail(&trace, t, e.into()))?;
            let io = ControllerIo {
                r: setup.reference,
                y: x,
                u_applied_prev: u_prev,
                dt,
            };
            if setup.fault_at(t) && active != ControllerId::LOCAL_PI {
                switch_to(&mut entries, &mut trace, &mut active, ControllerId::LOCAL_PI, kk, t, SwitchReason::Fault, &io);
            }
            let mut cmd = None;
            let mut step_error = None;
            for e in entries.iter_mut() {
                match e.dual.plant_sample(&io, e.id == active) {
                    Ok(Some(u)) => cmd = Some(u),
                    Ok(None) => {}
                    Err(err) if e.id == active => step_error = Some(err),
                    // a passive estimator failing only matters once it is chosen
                    Err(_) => {}
                }
            }
            if let Some(err) = step_error {
                if active == ControllerId::LOCAL_PI {
                    return Err(fail(&trace, t, err.into()));
                }
                switch_to(&mut entries, &mut trace, &mut active, ControllerId::LOCAL_PI, kk, t, SwitchReason::ControllerError, &io);
                let i = index_of(&entries, ControllerId::LOCAL_PI).expect("local controller always present");
                cmd = entries[i].dual.plant_sample(&io, true).map_err(|e| fail(&trace, t, e.into()))?;
            }
            let cmd = cmd.expect("active controller produced a command");
            let (applied, clamped) = enforce_constraints(cmd, u_prev);
            trace.samples.push(SampleRecord {
                t,
                r: setup.reference,
                y: x,
                u_commanded: cmd,
                u_applied: applied,
                rho_i: d.rho_i,
                active,
                clamped,
            });
            x = step_plant(x, applied, setup.q_o, d, &setup.uncertainty, dt).map_err(|e| fail(&trace, t, e.into()))?;
            u_prev = applied;
        }
        k += len;

        if matches!(mode, Mode::Platform) && k < total {
            let t = k as f64 * dt;
            if !setup.fault_at(t) {
                let records = trace.horizon_records(horizon);
                let next = select(&records, active);
                if next != active {
                    let io = ControllerIo {
                        r: setup.reference,
                        y: x,
                        u_applied_prev: u_prev,
                        dt,
                    };
                    switch_to(&mut entries, &mut trace, &mut active, next, k, t, SwitchReason::Selection, &io);
                }
            }
        }
        horizon += 1;
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn switch_to(
    entries: &mut [Entry],
    trace: &mut PlatformTrace,
    active: &mut ControllerId,
    to: ControllerId,
    sample: usize,
    t: f64,
    reason: SwitchReason,
    io: &ControllerIo,
) {
    if let Some(e) = entries.iter_mut().find(|e| e.id == to) {
        e.dual.activate(io);
    }
    trace.switches.push(SwitchEvent {
        sample,
        t,
        from: *active,
        to,
        reason,
    });
    *active = to;
}

/// Closed-loop response of one controller to a feed-density step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStudy {
    pub controller: ControllerId,
    pub step: f64,
    pub qw_gain: f64,
    pub t_step: f64,
    pub duration: f64,
    pub dt: f64,
}

impl StepStudy {
    pub fn new(controller: ControllerId, step: f64, qw_gain: f64) -> Self {
        Self {
            controller,
            step,
            qw_gain,
            t_step: 0.1,
            duration: 1.0,
            dt: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResponse {
    pub trace: PlatformTrace,
    pub t_step: f64,
    /// Time after the step until `ρ` stays within the band.
    pub settling_time: Option<f64>,
    /// Band used for the settling time, t/m³.
    pub band: f64,
    /// Final tracking errors `r − y`.
    pub steady_state_error: Vector2<f64>,
}

pub const SETTLING_BAND: f64 = 0.005;

/// Start at rest on the plant with the actuator error already compensated
/// (`q_w` commanded at `150 / gain`), then step `ρ_i`.
pub fn run_step_study(study: &StepStudy) -> Result<StepResponse, PlatformError> {
    let op = OperatingPoint::canonical();
    let uncertainty = ActuatorUncertainty::new(1.0, study.qw_gain)?;
    let rho_before = op.disturbance.rho_i;
    let disturbance = DisturbanceProfile::step(rho_before, rho_before + study.step, study.t_step, study.duration)?;
    let setup = PlatformSetup {
        duration: study.duration,
        selector: SelectorConfig {
            dt: study.dt,
            horizon: study.duration,
            ..SelectorConfig::default()
        },
        reference: DEFAULT_REFERENCE,
        initial_state: op.state,
        initial_input: ControlInput::new(op.input.q_i, op.input.q_w / study.qw_gain),
        q_o: op.q_o,
        uncertainty,
        disturbance,
        controllers: vec![study.controller],
        faults: Vec::new(),
    };
    setup.samples()?;
    let trace = run(&setup, Mode::Standalone(study.controller))?;
    let mut settled_after = None;
    for s in &trace.samples {
        if s.t >= study.t_step && (s.y.rho - s.r.rho).abs() > SETTLING_BAND {
            settled_after = Some(s.t + study.dt);
        }
    }
    let settling_time = match settled_after {
        None => Some(0.0),
        Some(t) if t < study.duration => Some(t - study.t_step),
        Some(_) => None,
    };
    let last = trace.samples.last().expect("run has samples");
    Ok(StepResponse {
        steady_state_error: last.r.to_vector() - last.y.to_vector(),
        settling_time,
        band: SETTLING_BAND,
        t_step: study.t_step,
        trace,
    })
}
