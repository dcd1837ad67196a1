//! Affine functionals along a run and audits of their monotonicity.

use serde::{Deserialize, Serialize};

use crate::affine::AffineFrame;
use crate::body::Body;
use crate::error::{Error, Result};
use crate::flow::{self, FlowParams, FlowState, TerminalEstimate};
use crate::sphere::unit_ball_volume;

fn check_power(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p must be finite and > 1, got {p}")))
    }
}

/// `Omega_p = integral of s S_n (K / s^{n+2})^{p/(n+1+p)}`.
pub fn p_affine_surface_area(b: &Body, p: f64) -> Result<f64> {
    check_power(p)?;
    let beta = p / (b.dim() as f64 + 1.0 + p);
    let f: Vec<f64> = b
        .support()
        .iter()
        .zip(b.s_n_values())
        .zip(b.centro_affine_values())
        .map(|((s, sn), c)| s * sn * c.powf(beta))
        .collect();
    Ok(b.grid().integrate(&f))
}

/// `Omega_p^{n+p+1} / V^{n+1-p}`.
pub fn iso_ratio(b: &Body, p: f64) -> Result<f64> {
    let n = b.dim() as f64;
    let omega = p_affine_surface_area(b, p)?;
    Ok(omega.powf(n + p + 1.0) / b.volume().powf(n + 1.0 - p))
}

/// `(n+1)^{n+p+1} omega_{n+1}^{2p}`, attained by centered ellipsoids.
pub fn iso_ceiling(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    (nf + 1.0).powf(nf + p + 1.0) * unit_ball_volume(n).powf(2.0 * p)
}

/// Snapshot of every audited quantity at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantRecord {
    pub t: f64,
    pub step: usize,
    pub volume: f64,
    pub polar_volume: f64,
    pub mahler: f64,
    pub omega_p: f64,
    pub iso_ratio: f64,
    pub centro_affine_min: f64,
    pub centro_affine_max: f64,
    pub min_speed: f64,
    pub harnack: f64,
    /// `min s` in the run's own frame.
    pub support_min: f64,
    /// `max s` in the run's own frame.
    pub support_max: f64,
    /// Inradius in the normalised frame.
    pub r_minus: f64,
    /// Circumradius in the normalised frame.
    pub r_plus: f64,
    pub banach_mazur_upper: f64,
}

/// Columns of the time-series table, in file order.
pub const RECORD_COLUMNS: [&str; 16] = [
    "t",
    "step",
    "volume",
    "polar_volume",
    "mahler",
    "omega_p",
    "iso_ratio",
    "centro_affine_min",
    "centro_affine_max",
    "min_speed",
    "harnack",
    "support_min",
    "support_max",
    "r_minus",
    "r_plus",
    "banach_mazur_upper",
];

/// Evaluate all record fields for `state`, measuring radii in `frame`.
pub fn record(state: &FlowState, frame: &AffineFrame) -> Result<InvariantRecord> {
    let b = state.body();
    let p = state.params().p;
    let normalized = if frame.fitted {
        b.linear_image(&frame.matrix)?
    } else {
        b.clone()
    };
    let (r_minus, r_plus) = normalized.radii_bounds();
    let (support_min, support_max) = b.radii_bounds();
    let (ca_min, ca_max) = b.centro_affine_extremes();
    let volume = b.volume();
    let polar_volume = b.polar_volume();
    let omega_p = p_affine_surface_area(b, p)?;
    let n = b.dim() as f64;
    Ok(InvariantRecord {
        t: state.t(),
        step: state.steps(),
        volume,
        polar_volume,
        mahler: volume * polar_volume,
        omega_p,
        iso_ratio: omega_p.powf(n + p + 1.0) / volume.powf(n + 1.0 - p),
        centro_affine_min: ca_min,
        centro_affine_max: ca_max,
        min_speed: flow::speed(b, state.params()).min(),
        harnack: flow::harnack_quantity(state),
        support_min,
        support_max,
        r_minus,
        r_plus,
        banach_mazur_upper: (r_plus / r_minus).ln(),
    })
}

/// A monotone-in-time series of [`InvariantRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Mahler,
    IsoRatio,
    MinSpeed,
    Harnack,
}

impl Series {
    pub const ALL: [Series; 4] = [Series::Mahler, Series::IsoRatio, Series::MinSpeed, Series::Harnack];

    pub fn name(&self) -> &'static str {
        match self {
            Series::Mahler => "mahler",
            Series::IsoRatio => "iso_ratio",
            Series::MinSpeed => "min_speed",
            Series::Harnack => "harnack",
        }
    }

    pub fn get(&self, r: &InvariantRecord) -> f64 {
        match self {
            Series::Mahler => r.mahler,
            Series::IsoRatio => r.iso_ratio,
            Series::MinSpeed => r.min_speed,
            Series::Harnack => r.harnack,
        }
    }

    /// Whether the series is constant along ball runs.
    pub fn constant_on_balls(&self) -> bool {
        matches!(self, Series::Mahler | Series::IsoRatio)
    }
}

impl std::str::FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Series::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown series '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub series: String,
    /// Most negative relative step change `(x_{k+1} - x_k) / |x_k|` (0 if none);
    /// a step away from zero counts as a change of `sign(x_{k+1})`.
    pub worst_decrement: f64,
    /// Record index (of the later record) at the worst decrement.
    pub worst_index: Option<usize>,
    pub slack: f64,
    pub pass: bool,
    /// Relative change from first to last record.
    pub total_change: f64,
    /// Total change exceeds the slack.
    pub strictly_increasing: bool,
}

/// Audit a series for non-decrease up to relative `slack` per step.
pub fn audit_monotone(series: &[InvariantRecord], field: Series, slack: f64) -> Result<MonotonicityReport> {
    let first = series.first().ok_or(Error::EmptySeries)?;
    let last = series.last().expect("non-empty");
    let mut worst = 0.0;
    let mut worst_index = None;
    for (k, pair) in series.windows(2).enumerate() {
        let (a, b) = (field.get(&pair[0]), field.get(&pair[1]));
        let rel = relative_change(a, b);
        if rel < worst {
            worst = rel;
            worst_index = Some(k + 1);
        }
    }
    let total = relative_change(field.get(first), field.get(last));
    Ok(MonotonicityReport {
        series: field.name().to_string(),
        worst_decrement: worst,
        worst_index,
        slack,
        pass: worst >= -slack,
        total_change: total,
        strictly_increasing: total > slack,
    })
}

/// `(b - a) / |a|`, measured against `|b|` when `a = 0`.
fn relative_change(a: f64, b: f64) -> f64 {
    if a != 0.0 {
        (b - a) / a.abs()
    } else if b != 0.0 {
        b.signum()
    } else {
        0.0
    }
}

/// Largest slack any acceptance audit may use.
pub const SLACK_CAP: f64 = 1e-6;

/// Measured discretisation noise of a ball run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackCalibration {
    /// Largest relative step change of the series that are constant on balls,
    /// and largest relative step decrease of the others.
    pub measured: f64,
    /// `min(max(10 measured, 1e-13), 1e-6)`.
    pub slack: f64,
}

pub fn calibrate_slack(ball_run: &[InvariantRecord]) -> Result<SlackCalibration> {
    if ball_run.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut measured = 0.0_f64;
    for field in Series::ALL {
        for pair in ball_run.windows(2) {
            let rel = relative_change(field.get(&pair[0]), field.get(&pair[1]));
            let noise = if field.constant_on_balls() { rel.abs() } else { -rel };
            measured = measured.max(noise);
        }
    }
    Ok(SlackCalibration {
        measured,
        slack: (10.0 * measured).max(1e-13).min(SLACK_CAP),
    })
}

/// Records whose value never exceeds `ceiling (1 + slack)`.
pub fn ceiling_violations(series: &[InvariantRecord], field: Series, ceiling: f64, slack: f64) -> Vec<usize> {
    series
        .iter()
        .enumerate()
        .filter(|(_, r)| field.get(r) > ceiling * (1.0 + slack))
        .map(|(k, _)| k)
        .collect()
}

/// Extinction time estimate used for rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionEstimate {
    pub t: f64,
    /// `T - t` at the last record, kept apart from `t` to avoid cancellation.
    pub remaining: f64,
    /// Time of the last record.
    pub t_last: f64,
    pub method: String,
    /// The containment bracket the estimate was clamped into, as remaining times.
    pub bracket: (f64, f64),
    pub clamped: bool,
    /// Unclamped extrapolated remaining time; NaN when the fit did not decrease.
    pub raw_remaining: f64,
}

impl ExtinctionEstimate {
    /// `T - t` for a record at time `t`.
    pub fn remaining_at(&self, t: f64) -> f64 {
        (self.t_last - t) + self.remaining
    }
}

/// Extinction time from the final records: `y = (V / omega)^{(1+alpha)/(n+1)}`
/// is exactly linear in `t` for balls and asymptotically linear for
/// converging runs, so `T - t = y / (-dy/dt)` with the slope fitted by least
/// squares over the last `window` records. The result is clamped into the
/// containment bracket, which must be taken from the last record's state.
pub fn estimate_extinction(
    series: &[InvariantRecord],
    params: &FlowParams,
    bracket: &TerminalEstimate,
    window: usize,
) -> Result<ExtinctionEstimate> {
    let window = window.max(2);
    if series.len() < 2 {
        return Err(Error::EmptySeries);
    }
    let t_last = series[series.len() - 1].t;
    if bracket.t != t_last {
        return Err(Error::InvalidParameter(format!(
            "bracket taken at t = {} but the series ends at t = {t_last}",
            bracket.t
        )));
    }
    let tail = &series[series.len().saturating_sub(window)..];
    let omega = unit_ball_volume(params.n);
    let power = params.one_plus_alpha() / (params.n as f64 + 1.0);
    let ys: Vec<(f64, f64)> = tail
        .iter()
        .map(|r| (r.t - t_last, (r.volume / omega).powf(power)))
        .collect();
    let m = ys.len() as f64;
    let (tm, ym) = ys.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / m, b + y / m));
    let (sxy, sxx) = ys.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - tm) * (y - ym), b + (t - tm) * (t - tm))
    });
    let slope = sxy / sxx;
    let y_last = ys[ys.len() - 1].1;
    let raw = if slope < 0.0 { y_last / -slope } else { f64::NAN };
    let (lo, hi) = (bracket.remaining_lo, bracket.remaining_hi);
    let (remaining, clamped) = if raw.is_nan() {
        (0.5 * (lo + hi), true)
    } else if raw < lo {
        (lo, true)
    } else if raw > hi {
        (hi, true)
    } else {
        (raw, false)
    };
    Ok(ExtinctionEstimate {
        t: t_last + remaining,
        remaining,
        t_last,
        method: format!(
            "volume-power linear extrapolation over last {} records, clamped to containment bracket",
            ys.len()
        ),
        bracket: (lo, hi),
        clamped,
        raw_remaining: raw,
    })
}

/// Range of `(K / s^{n+2})^beta (T - t)` over the tail of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBracket {
    /// Smallest value of the lower series.
    pub lower: f64,
    /// Largest value of the upper series.
    pub upper: f64,
    pub width: f64,
    /// Relative spread of the lower and upper series over the last quarter of
    /// the tail; small values indicate the bracket has settled.
    pub lower_drift: f64,
    pub upper_drift: f64,
    pub records: usize,
}

/// Bracket of the scaled centro-affine curvature over records with
/// `t >= t_0 + from (t_end - t_0)`.
pub fn curvature_bracket(
    series: &[InvariantRecord],
    params: &FlowParams,
    terminal: &ExtinctionEstimate,
    from: f64,
) -> Result<CurvatureBracket> {
    let (first, last) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptySeries),
    };
    let start = first.t + from * (last.t - first.t);
    let tail: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.t >= start && terminal.remaining_at(r.t) > 0.0)
        .map(|r| {
            let w = terminal.remaining_at(r.t);
            (
                r.centro_affine_min.powf(params.beta) * w,
                r.centro_affine_max.powf(params.beta) * w,
            )
        })
        .collect();
    if tail.is_empty() {
        return Err(Error::EmptySeries);
    }
    let lower = tail.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let upper = tail.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let settle = &tail[tail.len() - (tail.len() / 4).max(1)..];
    let spread = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let lo = settle.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = settle.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / hi.abs().max(f64::MIN_POSITIVE)
    };
    Ok(CurvatureBracket {
        lower,
        upper,
        width: upper - lower,
        lower_drift: spread(&|v| v.0),
        upper_drift: spread(&|v| v.1),
        records: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::normalize_sl;
    use crate::sphere::{build_grid, SphereGrid};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sphere(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(2, n).unwrap())
    }

    #[test]
    fn ball_values() {
        let g = sphere(16);
        let unit = Body::ball(g.clone(), 1.0).unwrap();
        for p in [1.5, 3.0, 7.0] {
            assert!((p_affine_surface_area(&unit, p).unwrap() - 4.0 * PI).abs() < 1e-12);
        }
        // n = 2, p = 3: (4 pi)^6 / V^0 = 3^6 (4 pi / 3)^6
        let ceiling = 3.0_f64.powi(6) * (4.0 * PI / 3.0).powi(6);
        assert!((iso_ceiling(2, 3.0) / ceiling - 1.0).abs() < 1e-14);
        assert!((iso_ratio(&unit, 3.0).unwrap() / ceiling - 1.0).abs() < 1e-12);
        let r = 1.7;
        let ball = Body::ball(g, r).unwrap();
        let p = 2.5;
        let expected = r.powf(3.0 * (3.0 - p) / (3.0 + p)) * 4.0 * PI;
        assert!((p_affine_surface_area(&ball, p).unwrap() / expected - 1.0).abs() < 1e-12);
        assert!(p_affine_surface_area(&ball, 1.0).is_err());
    }

    #[test]
    fn ellipsoids_attain_the_ceiling() {
        let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.2, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 1.0 / 1.08]);
        let e = Body::ball(sphere(32), 1.0).unwrap().linear_image(&a).unwrap();
        assert!((p_affine_surface_area(&e, 3.0).unwrap() / (4.0 * PI) - 1.0).abs() < 1e-6);
        assert!((iso_ratio(&e, 3.0).unwrap() / iso_ceiling(2, 3.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn harmonic_bump_is_below_the_ceiling() {
        let g = sphere(32);
        let b = Body::from_support_fn(g, |z| {
            1.0 + 0.05 * (35.0 * z[2].powi(4) - 30.0 * z[2].powi(2) + 3.0) / 8.0
        })
        .unwrap();
        let r = iso_ratio(&b, 3.0).unwrap() / iso_ceiling(2, 3.0);
        assert!(r < 1.0 - 1e-3, "{r}");
    }

    #[test]
    fn record_frames_agree_on_curvature_extremes() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let g = sphere(32);
        let b = Body::from_support_fn(g, |z| (1.0 + 0.3 * z[0] * z[0] + 0.1 * z[1] * z[1]).sqrt()).unwrap();
        let state = FlowState::new(b, f).unwrap();
        let (frame, normalized) = normalize_sl(state.body()).unwrap();
        let a = record(&state, &frame).unwrap();
        let id = record(&state, &AffineFrame::identity(3, 1.0)).unwrap();
        let (lo, hi) = normalized.centro_affine_extremes();
        assert!((lo / a.centro_affine_min - 1.0).abs() < 5e-4);
        assert!((hi / a.centro_affine_max - 1.0).abs() < 5e-4);
        assert!(a.r_plus / a.r_minus <= id.r_plus / id.r_minus);
        assert_eq!(a.harnack, 0.0);
        assert!((a.mahler / (4.0 * PI / 3.0).powi(2) - 1.0).abs() < 1e-6);
    }

    fn constant(v: f64, n: usize) -> Vec<InvariantRecord> {
        (0..n)
            .map(|k| InvariantRecord {
                t: k as f64,
                step: k,
                volume: 1.0,
                polar_volume: 1.0,
                mahler: v,
                omega_p: 1.0,
                iso_ratio: v,
                centro_affine_min: 1.0,
                centro_affine_max: 1.0,
                min_speed: v,
                harnack: v,
                support_min: 1.0,
                support_max: 1.0,
                r_minus: 1.0,
                r_plus: 1.0,
                banach_mazur_upper: 0.0,
            })
            .collect()
    }

    #[test]
    fn constant_series_pass() {
        let s = constant(2.0, 5);
        for f in Series::ALL {
            let r = audit_monotone(&s, f, 0.0).unwrap();
            assert!(r.pass);
            assert_eq!(r.worst_decrement, 0.0);
            assert!(!r.strictly_increasing);
        }
        assert_eq!(audit_monotone(&[], Series::Mahler, 0.0), Err(Error::EmptySeries));
    }

    #[test]
    fn decrease_is_reported_at_its_index() {
        let mut s = constant(1.0, 6);
        s[3].mahler = 1.0 - 1e-5;
        s[4].mahler = 1.0 + 1e-3;
        s[5].mahler = 1.0 + 2e-3;
        let r = audit_monotone(&s, Series::Mahler, 1e-6).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_index, Some(3));
        assert!((r.worst_decrement + 1e-5).abs() < 1e-15);
        assert!(r.strictly_increasing);
        assert!(audit_monotone(&s, Series::Mahler, 1e-4).unwrap().pass);
    }

    #[test]
    fn slack_from_noise() {
        let mut s = constant(1.0, 4);
        s[2].mahler = 1.0 + 3e-12;
        let c = calibrate_slack(&s).unwrap();
        assert!((c.measured - 3e-12).abs() < 1e-15);
        assert!((c.slack - 3e-11).abs() < 1e-14);
        s[1].iso_ratio = 2.0;
        assert_eq!(calibrate_slack(&s).unwrap().slack, SLACK_CAP);
    }

    #[test]
    fn extinction_of_a_ball_run() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let g = sphere(16);
        // balls sampled on the exact law, so the estimate is exact up to round-off
        let series: Vec<InvariantRecord> = (0..20)
            .map(|k| {
                let t = 0.015 * k as f64;
                let r = flow::exact_ball_radius(1.0, t, &f).unwrap();
                let st = FlowState::at_time(Body::ball(g.clone(), r).unwrap(), f, t).unwrap();
                record(&st, &AffineFrame::identity(3, 1.0)).unwrap()
            })
            .collect();
        let t_last = series[19].t;
        let bracket = TerminalEstimate::new(t_last, 0.0, 1.0, "test");
        let est = estimate_extinction(&series, &f, &bracket, 8).unwrap();
        assert!((est.t - 1.0 / 3.0).abs() < 1e-12, "{}", est.t);
        assert!((est.remaining - (1.0 / 3.0 - t_last)).abs() < 1e-12);
        assert!(!est.clamped);
        let narrow = TerminalEstimate::new(t_last, 0.4 - t_last, 0.5 - t_last, "test");
        let est = estimate_extinction(&series, &f, &narrow, 8).unwrap();
        assert!(est.clamped && est.remaining == 0.4 - t_last);
        let stale = TerminalEstimate::new(0.1, 0.0, 1.0, "test");
        assert!(estimate_extinction(&series, &f, &stale, 8).is_err());
    }

    #[test]
    fn ball_curvature_bracket_is_constant() {
        // on a ball (K / s^{n+2})^beta (T - t) = R^{-(1+alpha)} (T - t) = 1 / (1 + alpha)
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let series: Vec<InvariantRecord> = (0..10)
            .map(|k| {
                let t = 0.03 * k as f64;
                let r = flow::exact_ball_radius(1.0, t, &f).unwrap();
                let mut rec = constant(1.0, 1)[0];
                rec.t = t;
                rec.centro_affine_min = r.powi(-6);
                rec.centro_affine_max = r.powi(-6);
                rec
            })
            .collect();
        let t_last = series[9].t;
        let terminal = ExtinctionEstimate {
            t: 1.0 / 3.0,
            remaining: 1.0 / 3.0 - t_last,
            t_last,
            method: "exact".into(),
            bracket: (0.0, 1.0),
            clamped: false,
            raw_remaining: 1.0 / 3.0 - t_last,
        };
        let c = curvature_bracket(&series, &f, &terminal, 0.5).unwrap();
        assert!((c.lower - 1.0 / 3.0).abs() < 1e-12 && (c.upper - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.lower_drift < 1e-12);
    }
}
