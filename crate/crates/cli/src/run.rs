//! Execution of one flow experiment and the files it leaves behind.
//!
//! A run directory holds `metadata.json` (written before stepping),
//! `series.csv` (one row per record, flushed as it goes), `snapshots/`
//! (written by a separate thread) and `audit.json` (written last, also
//! after a failed run).

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::thread::{self, JoinHandle};

use anyhow::{anyhow, Context};
use caflow::affine::{
    admissible_epsilon, normalize_sl, AffineFrame, PinchingSpec, MVEE_MAX_ITERATIONS, MVEE_TOLERANCE, PINCHING_CEILING,
};
use caflow::body::{CONVEXITY_FLOOR, SYMMETRY_TOLERANCE};
use caflow::flow::{
    displacement_monitor, evolve, rescale, terminal_estimate, FlowParams, FlowState, HaltPolicy, HaltReason,
    TerminalEstimate,
};
use caflow::invariants::{
    calibrate_slack, curvature_bracket, estimate_extinction, record, CurvatureBracket, ExtinctionEstimate,
    InvariantRecord, RECORD_COLUMNS, SLACK_CAP,
};
use caflow::Body;
use serde::Serialize;
use serde_json::json;

use crate::audit::{audit_series, SeriesAudit, ELLIPSOID_GAP};
use crate::config::{Horizon, RunConfig, SlackPolicy};
use crate::snapshot;

/// Records after this fraction of the run enter the curvature bracket.
pub const BRACKET_FROM: f64 = 0.5;
/// Deviation from the unit sphere accepted for the rescaled final body.
pub const RESCALED_TOLERANCE: f64 = 1e-2;
/// Anchors kept for the displacement audit, besides the initial state.
const DISPLACEMENT_ANCHORS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct SlackReport {
    pub policy: SlackPolicy,
    /// Noise of the calibration run, when calibrated.
    pub measured: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DisplacementAudit {
    /// Smallest displacement monitor over record pairs, relative to the
    /// earlier state's largest support value.
    pub min: f64,
    pub tolerance: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Rescaled-flow analysis at the last recorded state.
#[derive(Debug, Clone, Serialize)]
pub struct TerminalAudit {
    pub extinction: ExtinctionEstimate,
    pub curvature_bracket: Option<CurvatureBracket>,
    /// `max |s - 1|` of the normalised, rescaled final body.
    pub deviation: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunAudit {
    pub status: &'static str,
    pub error: Option<String>,
    pub halt: Option<HaltReason>,
    pub steps: usize,
    pub t_final: f64,
    pub series: Option<SeriesAudit>,
    pub displacement: DisplacementAudit,
    /// Reported only; its thresholds are not part of the verdict.
    pub terminal: Option<TerminalAudit>,
    pub pass: bool,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub audit: RunAudit,
}

impl RunOutcome {
    /// 0 when every audit passed, 2 on an audit failure, 1 if the run aborted.
    pub fn exit_code(&self) -> i32 {
        match (self.audit.status, self.audit.pass) {
            ("completed", true) => 0,
            ("completed", false) => 2,
            _ => 1,
        }
    }
}

struct SnapshotWriter {
    sender: Option<SyncSender<(PathBuf, String)>>,
    handle: Option<JoinHandle<anyhow::Result<()>>>,
    dir: PathBuf,
}

impl SnapshotWriter {
    fn start(dir: PathBuf, bound: usize) -> Self {
        let (sender, receiver) = sync_channel::<(PathBuf, String)>(bound);
        let handle = thread::spawn(move || {
            for (path, text) in receiver {
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        });
        Self {
            sender: Some(sender),
            handle: Some(handle),
            dir,
        }
    }

    /// Blocks while the queue is full.
    fn submit(&self, state: &FlowState) -> anyhow::Result<()> {
        let path = self.dir.join(format!("step_{:08}.json", state.steps()));
        self.sender
            .as_ref()
            .expect("writer is open")
            .send((path, snapshot::state_to_string(state)))
            .map_err(|_| anyhow!("snapshot writer stopped early"))
    }

    fn finish(mut self) -> anyhow::Result<()> {
        drop(self.sender.take());
        self.handle
            .take()
            .expect("joined once")
            .join()
            .map_err(|_| anyhow!("snapshot writer panicked"))?
    }
}

fn calibrate(config: &RunConfig, body: &Body, params: &FlowParams) -> anyhow::Result<SlackReport> {
    match config.slack {
        SlackPolicy::Fixed(value) => Ok(SlackReport {
            policy: config.slack,
            measured: None,
            value,
        }),
        SlackPolicy::Calibrate(steps) => {
            let ball = Body::ball(body.grid().clone(), 1.0)?;
            let policy = HaltPolicy {
                safety: config.safety,
                max_steps: Some(steps),
                ..HaltPolicy::default()
            };
            let mut records = Vec::with_capacity(steps + 1);
            evolve(FlowState::new(ball, *params)?, &policy, |s| {
                let (frame, _) = normalize_sl(s.body())?;
                records.push(record(s, &frame)?);
                Ok(())
            })
            .context("slack calibration run")?;
            let c = calibrate_slack(&records)?;
            Ok(SlackReport {
                policy: config.slack,
                measured: Some(c.measured),
                value: c.slack,
            })
        }
    }
}

fn metadata(
    config: &RunConfig,
    body: &Body,
    params: &FlowParams,
    slack: &SlackReport,
    initial: &TerminalEstimate,
    t_end: Option<f64>,
    policy: &HaltPolicy,
) -> anyhow::Result<serde_json::Value> {
    let pinching = PinchingSpec::new(config.epsilon, config.gamma, params)?;
    let ceiling = body.mahler_ceiling();
    Ok(json!({
        "format": "caflow-run",
        "version": 1,
        "config": config,
        "grid": body.grid().descriptor(),
        "nodes": body.grid().len(),
        "seed_symmetrization": body.symmetrization(),
        "flow": {
            "p": params.p,
            "n": params.n,
            "direction": params.direction,
            "alpha": params.alpha,
            "beta": params.beta,
            "one_plus_alpha": params.one_plus_alpha(),
            "harnack_exponent": params.harnack_exponent,
        },
        "pinching": {
            "epsilon": pinching.epsilon,
            "gamma": pinching.gamma,
            "gamma_dependent_audits": "conditional",
            "delta": pinching.delta,
            "delta_power": pinching.delta.powf(params.one_plus_alpha()),
            "ceiling": PINCHING_CEILING,
            "admissible": pinching.admissible,
            "largest_admissible_epsilon": admissible_epsilon(config.gamma, params)?,
            "initial_mahler_gap": 1.0 - body.mahler_volume() / ceiling,
            "initially_pinched": body.mahler_volume() > ceiling / (1.0 + config.epsilon),
        },
        "slack": slack,
        "horizon": {
            "policy": config.horizon,
            "t_end": t_end,
            "initial_extinction_bracket": initial,
        },
        "halt": policy,
        "estimators": estimators(config, params),
        "files": {
            "series": { "path": "series.csv", "columns": RECORD_COLUMNS },
            "snapshots": { "dir": "snapshots", "format": snapshot::FORMAT, "version": snapshot::VERSION },
            "audit": "audit.json",
        },
    }))
}

/// Every estimator and tolerance choice, for the metadata document.
fn estimators(config: &RunConfig, params: &FlowParams) -> serde_json::Value {
    json!({
        "hessian": if params.n == 1 {
            "s'' + s with fourth-order periodic central differences"
        } else {
            "analytic derivatives of the truncated spherical-harmonic expansion with explicit Christoffel terms"
        },
        "interpolant": if params.n == 1 { "trigonometric interpolant of the nodal values" } else { "spherical harmonics fitted by Gauss-Legendre quadrature, degree nlat/2" },
        "frame_convention": "(e_theta, e_phi) on S^2, e_theta on S^1; all reported quantities are frame invariant",
        "convexity_floor": CONVEXITY_FLOOR,
        "convexity_guard": "hard error when an eigenvalue of the radii matrix falls below floor * largest eigenvalue",
        "symmetry_tolerance": SYMMETRY_TOLERANCE,
        "symmetrization": "s <- (s(z) + s(-z)) / 2 at construction, correction reported",
        "derived_field_cache": "bodies are immutable; derived fields computed once per body",
        "polar": "radial minimisation of the interpolant by damped Newton on the hyperplane <u, x> = 1, started at the best grid node",
        "mahler_volume": "polar volume from the radial formula (1/(n+1)) integral of s^-(n+1)",
        "omega_p_integrand": "s S_n (K / s^(n+2))^(p/(n+1+p))",
        "time_scheme": "explicit midpoint (RK2)",
        "step_size": "safety * h^2 / max D, h^2 = 2 / (largest Laplacian eigenvalue), D the largest diffusion eigenvalue of the linearised flow",
        "dual_flow_grid": "polar bodies reuse the grid of the body",
        "harnack_at_t0": 0.0,
        "normalization": "Lowner ellipsoid of the boundary samples (log-barrier Newton), identity frame kept when it gives a smaller r+/r-",
        "normalization_points": "boundary point of every grid node",
        "mvee_tolerance": MVEE_TOLERANCE,
        "mvee_max_iterations": MVEE_MAX_ITERATIONS,
        "extinction_time": "linear fit of (V/omega)^((1+alpha)/(n+1)) over the last records, clamped into the containment bracket of the last state",
        "extinction_window": config.extinction_window,
        "extinction_bracket": "r_-^(1+alpha)/(1+alpha) <= T - t <= r_+^(1+alpha)/(1+alpha), intersected over identity and normalised frames",
        "curvature_bracket_from": BRACKET_FROM,
        "rescaled_tolerance": RESCALED_TOLERANCE,
        "slack_rule": "min(max(10 * measured ball-run noise, 1e-13), cap)",
        "slack_cap": SLACK_CAP,
        "ellipsoid_gap": ELLIPSOID_GAP,
        "displacement_tolerance": SLACK_CAP,
        "displacement_anchors": format!("initial state and the last {DISPLACEMENT_ANCHORS} snapshot states"),
    })
}

fn terminal_audit(records: &[InvariantRecord], last: &FlowState, config: &RunConfig) -> anyhow::Result<TerminalAudit> {
    let params = last.params();
    let bracket = terminal_estimate(last);
    let extinction = estimate_extinction(records, params, &bracket, config.extinction_window)?;
    let curvature = curvature_bracket(records, params, &extinction, BRACKET_FROM).ok();
    let (_, normalized) = normalize_sl(last.body())?;
    let rescaled = rescale(&normalized, params, extinction.remaining)?;
    let deviation = rescaled.support().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let (r_minus, r_plus) = rescaled.radii_bounds();
    Ok(TerminalAudit {
        extinction,
        curvature_bracket: curvature,
        deviation,
        r_minus,
        r_plus,
        within_tolerance: deviation < RESCALED_TOLERANCE,
    })
}

struct Progress {
    records: Vec<InvariantRecord>,
    frame: Option<AffineFrame>,
    anchors: Vec<FlowState>,
    displacement_min: f64,
    pairs: usize,
    last_recorded: Option<usize>,
    last_snapshot: Option<usize>,
}

impl Progress {
    fn observe(&mut self, s: &FlowState, config: &RunConfig, table: &mut csv::Writer<File>) -> anyhow::Result<()> {
        if self.records.len() % config.normalize_every == 0 || self.frame.is_none() {
            self.frame = Some(normalize_sl(s.body())?.0);
        }
        let r = record(s, self.frame.as_ref().expect("frame set above"))?;
        table.serialize(r)?;
        table.flush()?;
        self.records.push(r);
        self.last_recorded = Some(s.steps());
        for a in &self.anchors {
            let q = displacement_monitor(a, s)?;
            self.displacement_min = self.displacement_min.min(q.min() / a.body().support().max());
            self.pairs += 1;
        }
        Ok(())
    }

    fn snapshot(&mut self, s: &FlowState, writer: &SnapshotWriter) -> anyhow::Result<()> {
        writer.submit(s)?;
        self.last_snapshot = Some(s.steps());
        if self.anchors.len() > DISPLACEMENT_ANCHORS {
            self.anchors.remove(1);
        }
        self.anchors.push(s.clone());
        Ok(())
    }
}

/// Execute a run. Invalid configurations and seeds fail before anything is
/// written; failures during stepping leave partial artifacts and an
/// `audit.json` with status "failed".
pub fn run(config: &RunConfig) -> anyhow::Result<RunOutcome> {
    config.validate().map_err(|e| anyhow!("invalid configuration: {e}"))?;
    let body = config.seed.build(config.n, config.resolution, config.rng_seed)?;
    let params = FlowParams::contracting(config.p, body.dim())?;
    let initial = FlowState::new(body.clone(), params)?;
    let bracket = terminal_estimate(&initial);
    let t_end = match config.horizon {
        Horizon::Fraction(f) if f < 1.0 => Some(f * bracket.midpoint()),
        _ => None,
    };
    let policy = HaltPolicy {
        safety: config.safety,
        t_end,
        max_steps: match config.horizon {
            Horizon::Steps(k) => Some(k),
            Horizon::Fraction(_) => None,
        },
        ..HaltPolicy::default()
    };
    let slack = calibrate(config, &body, &params)?;

    let dir = config.out_dir.clone();
    let snapshots = dir.join("snapshots");
    fs::create_dir_all(&snapshots).with_context(|| format!("creating {}", snapshots.display()))?;
    let meta = metadata(config, &body, &params, &slack, &bracket, t_end, &policy)?;
    write_json(&dir.join("metadata.json"), &meta)?;

    let mut table = csv::Writer::from_path(dir.join("series.csv"))?;
    let writer = SnapshotWriter::start(snapshots, config.snapshot_queue);
    let mut progress = Progress {
        records: Vec::new(),
        frame: None,
        anchors: Vec::new(),
        displacement_min: f64::INFINITY,
        pairs: 0,
        last_recorded: None,
        last_snapshot: None,
    };
    let mut latest: Option<FlowState> = None;
    let outcome = evolve(initial, &policy, |s| {
        let step = s.steps();
        let wrap = |e: anyhow::Error| caflow::Error::InvalidParameter(format!("{e:#}"));
        if step % config.record_every == 0 {
            progress.observe(s, config, &mut table).map_err(wrap)?;
        }
        if step == 0 || (config.snapshot_every > 0 && step % config.snapshot_every == 0) {
            progress.snapshot(s, &writer).map_err(wrap)?;
        }
        latest = Some(s.clone());
        Ok(())
    });
    let (error, halt, last) = match outcome {
        Ok((last, halt)) => (None, Some(halt), Some(last)),
        Err(e) => (Some(e.to_string()), None, latest.take()),
    };
    let mut error = error;
    if let (Some(last), None) = (&last, &error) {
        let finish = (|| -> anyhow::Result<()> {
            if progress.last_recorded != Some(last.steps()) {
                progress.observe(last, config, &mut table)?;
            }
            if progress.last_snapshot != Some(last.steps()) {
                progress.snapshot(last, &writer)?;
            }
            Ok(())
        })();
        if let Err(e) = finish {
            error = Some(format!("{e:#}"));
        }
    }
    table.flush()?;
    if let Err(e) = writer.finish() {
        // the writer's own error is the root cause of a failed submit
        error = Some(format!("{e:#}"));
    }

    let series = if progress.records.is_empty() {
        None
    } else {
        Some(audit_series(
            &progress.records,
            &params,
            slack.value,
            config.epsilon,
            config.gamma,
        )?)
    };
    let displacement = DisplacementAudit {
        min: progress.displacement_min,
        tolerance: SLACK_CAP,
        pairs: progress.pairs,
        pass: progress.pairs == 0 || progress.displacement_min >= -SLACK_CAP,
    };
    let terminal = match (&last, halt, &error) {
        (Some(last), Some(HaltReason::NearExtinction), None) => terminal_audit(&progress.records, last, config).ok(),
        _ => None,
    };
    let pass = error.is_none() && series.as_ref().is_some_and(|s| s.pass) && displacement.pass;
    let audit = RunAudit {
        status: if error.is_none() { "completed" } else { "failed" },
        error,
        halt,
        steps: last.as_ref().map_or(0, |s| s.steps()),
        t_final: last.as_ref().map_or(0.0, |s| s.t()),
        series,
        displacement,
        terminal,
        pass,
    };
    write_json(&dir.join("audit.json"), &audit)?;
    Ok(RunOutcome { dir, audit })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
