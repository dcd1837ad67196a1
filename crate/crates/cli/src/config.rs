//! Run configuration and its validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use caflow::invariants::SLACK_CAP;
use serde::Serialize;

use crate::seed::SeedSpec;

/// When a run stops, besides the near-extinction and step-underflow halts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Horizon {
    /// Stop at this fraction of the extinction time predicted at t = 0
    /// (midpoint of the containment bracket). `1` runs to the near-extinction halt.
    Fraction(f64),
    /// Stop after this many steps.
    Steps(usize),
}

impl FromStr for Horizon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("horizon '{s}' must be fraction:<f> or steps:<k>"))?;
        match kind {
            "fraction" => value
                .parse()
                .map(Horizon::Fraction)
                .map_err(|_| format!("bad fraction '{value}'")),
            "steps" => value
                .parse()
                .map(Horizon::Steps)
                .map_err(|_| format!("bad step count '{value}'")),
            _ => Err(format!("horizon kind '{kind}' must be fraction or steps")),
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Fraction(x) => write!(f, "fraction:{x}"),
            Horizon::Steps(k) => write!(f, "steps:{k}"),
        }
    }
}

/// Where the per-step audit slack comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SlackPolicy {
    /// Measure the noise of a unit-ball run of this many steps on the same
    /// grid and power.
    Calibrate(usize),
    Fixed(f64),
}

impl FromStr for SlackPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("calibrate", k)) => k
                .parse()
                .map(SlackPolicy::Calibrate)
                .map_err(|_| format!("bad calibration step count '{k}'")),
            Some(("fixed", v)) => v
                .parse()
                .map(SlackPolicy::Fixed)
                .map_err(|_| format!("bad slack '{v}'")),
            _ => Err(format!("slack '{s}' must be calibrate:<steps> or fixed:<value>")),
        }
    }
}

impl fmt::Display for SlackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlackPolicy::Calibrate(k) => write!(f, "calibrate:{k}"),
            SlackPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub p: f64,
    /// Angles on S^1, or latitudes on S^2 (with twice as many longitudes).
    pub resolution: usize,
    pub seed: SeedSpec,
    pub horizon: Horizon,
    /// Fraction of the stable step taken each step.
    pub safety: f64,
    /// Record every k-th step; the final state is always recorded.
    pub record_every: usize,
    /// Refit the normalising frame every k-th record; other records reuse the last frame.
    pub normalize_every: usize,
    /// Snapshot every k-th step (0: first and last state only).
    pub snapshot_every: usize,
    /// Bound of the snapshot writer queue.
    pub snapshot_queue: usize,
    pub epsilon: f64,
    pub gamma: f64,
    /// Seed of the random perturbation stream.
    pub rng_seed: u64,
    pub slack: SlackPolicy,
    /// Records used to extrapolate the extinction time.
    pub extinction_window: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(seed: SeedSpec, out_dir: PathBuf) -> Self {
        Self {
            n: 2,
            p: 3.0,
            resolution: 32,
            seed,
            horizon: Horizon::Fraction(1.0),
            safety: 0.5,
            record_every: 1,
            normalize_every: 1,
            snapshot_every: 0,
            snapshot_queue: 4,
            epsilon: 0.01,
            gamma: 1.0,
            rng_seed: 0,
            slack: SlackPolicy::Calibrate(40),
            extinction_window: 10,
            out_dir,
        }
    }

    /// Check every numeric field against its documented range.
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !(1..=2).contains(&self.n) {
            problems.push(format!("n must be 1 or 2, got {}", self.n));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            problems.push(format!("p must be finite and > 1, got {}", self.p));
        }
        if self.resolution < 8 {
            problems.push(format!("resolution must be at least 8, got {}", self.resolution));
        }
        match self.horizon {
            Horizon::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                problems.push(format!("horizon fraction must lie in (0, 1], got {f}"))
            }
            Horizon::Steps(0) => problems.push("horizon step count must be positive".into()),
            _ => {}
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            problems.push(format!("safety must lie in (0, 1], got {}", self.safety));
        }
        if self.record_every == 0 {
            problems.push("record cadence must be positive".into());
        }
        if self.normalize_every == 0 {
            problems.push("normalisation cadence must be positive".into());
        }
        if self.snapshot_queue == 0 {
            problems.push("snapshot queue bound must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            problems.push(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            problems.push(format!("gamma must be positive, got {}", self.gamma));
        }
        match self.slack {
            SlackPolicy::Calibrate(k) if k < 2 => problems.push("slack calibration needs at least 2 steps".into()),
            SlackPolicy::Fixed(v) if !(v >= 0.0 && v <= SLACK_CAP) => {
                problems.push(format!("fixed slack must lie in [0, {SLACK_CAP}], got {v}"))
            }
            _ => {}
        }
        if self.extinction_window < 2 {
            problems.push("extinction window must cover at least 2 records".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::new(SeedSpec::Ball { radius: 1.0 }, "out".into())
    }

    #[test]
    fn defaults_are_valid() {
        assert_eq!(base().validate(), Ok(()));
    }

    #[test]
    fn out_of_range_fields_are_all_reported() {
        let mut c = base();
        c.n = 3;
        c.p = 1.0;
        c.safety = 1.5;
        c.slack = SlackPolicy::Fixed(1e-3);
        let msg = c.validate().unwrap_err();
        for needle in ["n must", "p must", "safety", "fixed slack"] {
            assert!(msg.contains(needle), "{msg}");
        }
    }

    #[test]
    fn policies_parse_and_print() {
        assert_eq!("fraction:0.5".parse::<Horizon>().unwrap(), Horizon::Fraction(0.5));
        assert_eq!("steps:200".parse::<Horizon>().unwrap(), Horizon::Steps(200));
        assert!("forever".parse::<Horizon>().is_err());
        assert_eq!(
            "calibrate:30".parse::<SlackPolicy>().unwrap(),
            SlackPolicy::Calibrate(30)
        );
        assert_eq!("fixed:1e-9".parse::<SlackPolicy>().unwrap(), SlackPolicy::Fixed(1e-9));
        assert_eq!(Horizon::Steps(7).to_string(), "steps:7");
        assert_eq!(SlackPolicy::Fixed(0.5).to_string(), "fixed:0.5");
    }
}
