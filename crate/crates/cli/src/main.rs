use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use caflow::affine::normalize_sl;
use caflow::flow::FlowParams;
use caflow::invariants::{iso_ratio, p_affine_surface_area};
use caflow_cli::audit::{audit_series, read_series};
use caflow_cli::config::{Horizon, RunConfig, SlackPolicy};
use caflow_cli::{load_body, run, save_body, SeedSpec};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "caflow",
    version,
    about = "Centro-affine normal flows of origin-symmetric convex bodies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a seed body and write metadata, series, snapshots and audits.
    Run(RunArgs),
    /// Re-run the series audits of a finished run directory.
    Audit {
        dir: PathBuf,
        /// Override the slack stored in the run metadata.
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Print the invariants of a stored body.
    Invariants {
        body: PathBuf,
        /// Power of the affine surface area and isoperimetric ratio.
        #[arg(long, default_value_t = 3.0)]
        p: f64,
    },
    /// Write the polar body.
    Polar { input: PathBuf, output: PathBuf },
    /// Write the SL-normalised body and print the frame.
    Normalize { input: PathBuf, output: PathBuf },
    /// Build a seed body and store it.
    Seed {
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value = "ball")]
        seed: SeedSpec,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    /// Angles on S^1, or latitudes on S^2.
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    /// ball[:R], ellipsoid:a,b[,c], harmonic:amp,degree[,order], random:amp[,max_degree], cap:depth,width, l4:eta, file:path
    #[arg(long, default_value = "ball")]
    seed: SeedSpec,
    /// fraction:<f> of the predicted extinction time, or steps:<k>
    #[arg(long, default_value = "fraction:1")]
    horizon: Horizon,
    #[arg(long, default_value_t = 0.5)]
    safety: f64,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long, default_value_t = 1)]
    normalize_every: usize,
    /// 0 keeps only the first and last state.
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    #[arg(long, default_value_t = 4)]
    snapshot_queue: usize,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// calibrate:<steps> or fixed:<value>
    #[arg(long, default_value = "calibrate:40")]
    slack: SlackPolicy,
    #[arg(long, default_value_t = 10)]
    extinction_window: usize,
    #[arg(long, env = "CAFLOW_OUT", default_value = "caflow-out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(self) -> RunConfig {
        RunConfig {
            n: self.n,
            p: self.p,
            resolution: self.resolution,
            seed: self.seed,
            horizon: self.horizon,
            safety: self.safety,
            record_every: self.record_every,
            normalize_every: self.normalize_every,
            snapshot_every: self.snapshot_every,
            snapshot_queue: self.snapshot_queue,
            epsilon: self.epsilon,
            gamma: self.gamma,
            rng_seed: self.rng_seed,
            slack: self.slack,
            extinction_window: self.extinction_window,
            out_dir: self.out,
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn audit_dir(dir: &Path, slack: Option<f64>) -> anyhow::Result<i32> {
    let meta_path = dir.join("metadata.json");
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    let number = |pointer: &str| {
        meta.pointer(pointer)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| anyhow!("{}: missing numeric field {pointer}", meta_path.display()))
    };
    let params = FlowParams::contracting(number("/flow/p")?, number("/flow/n")? as usize)?;
    let slack = match slack {
        Some(s) => s,
        None => number("/slack/value")?,
    };
    let series = read_series(&dir.join("series.csv"))?;
    let report = audit_series(
        &series,
        &params,
        slack,
        number("/pinching/epsilon")?,
        number("/pinching/gamma")?,
    )?;
    print_json(&report)?;
    Ok(if report.pass { 0 } else { 2 })
}

fn execute(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Run(args) => {
            let outcome = run(&args.config())?;
            let a = &outcome.audit;
            println!(
                "{}: {} after {} steps (t = {}), audits {}",
                outcome.dir.display(),
                a.status,
                a.steps,
                a.t_final,
                if a.pass { "pass" } else { "FAIL" }
            );
            if let Some(e) = &a.error {
                eprintln!("error: {e}");
            }
            Ok(outcome.exit_code())
        }
        Command::Audit { dir, slack } => audit_dir(&dir, slack),
        Command::Invariants { body, p } => {
            let b = load_body(&body)?;
            let (lo, hi) = b.radii_bounds();
            let (ca_min, ca_max) = b.centro_affine_extremes();
            let (frame, _) = normalize_sl(&b)?;
            print_json(&json!({
                "n": b.dim(),
                "grid": b.grid().descriptor(),
                "volume": b.volume(),
                "polar_volume": b.polar_volume(),
                "mahler": b.mahler_volume(),
                "mahler_ratio": b.mahler_volume() / b.mahler_ceiling(),
                "p": p,
                "omega_p": p_affine_surface_area(&b, p)?,
                "iso_ratio": iso_ratio(&b, p)?,
                "centro_affine_min": ca_min,
                "centro_affine_max": ca_max,
                "support_min": lo,
                "support_max": hi,
                "banach_mazur_upper": frame.ratio.ln(),
            }))?;
            Ok(0)
        }
        Command::Polar { input, output } => {
            save_body(&output, &load_body(&input)?.polar()?)?;
            Ok(0)
        }
        Command::Normalize { input, output } => {
            let (frame, normalized) = normalize_sl(&load_body(&input)?)?;
            save_body(&output, &normalized)?;
            print_json(&frame)?;
            Ok(0)
        }
        Command::Seed {
            output,
            n,
            resolution,
            seed,
            rng_seed,
        } => {
            save_body(&output, &seed.build(n, resolution, rng_seed)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
