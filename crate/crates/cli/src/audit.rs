//! Audits over a recorded time series, shared by `run` and `audit`.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context};
use caflow::affine::PinchingSpec;
use caflow::flow::FlowParams;
use caflow::invariants::{
    audit_monotone, ceiling_violations, iso_ceiling, InvariantRecord, MonotonicityReport, Series, RECORD_COLUMNS,
};
use caflow::sphere::unit_ball_volume;
use serde::Serialize;

/// A run whose first record sits this close to the Mahler ceiling is treated
/// as an ellipsoid run, where strict increase is not expected.
pub const ELLIPSOID_GAP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct StrictnessCheck {
    pub series: String,
    pub expected: bool,
    pub total_change: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CeilingAudit {
    pub series: String,
    pub ceiling: f64,
    /// Largest `value / ceiling` over the run.
    pub worst_ratio: f64,
    pub violations: Vec<usize>,
    pub pass: bool,
}

/// Distance bound of the stability estimate; only binding when the pinching
/// hypothesis is admissible and holds initially.
#[derive(Debug, Clone, Serialize)]
pub struct PinchingAudit {
    pub spec: PinchingSpec,
    pub initially_pinched: bool,
    pub distance_bound: f64,
    pub max_distance: f64,
    pub within_bound: bool,
    /// Not counted towards the overall verdict.
    pub informational: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesAudit {
    pub records: usize,
    pub slack: f64,
    pub ellipsoidal: bool,
    pub monotonicity: Vec<MonotonicityReport>,
    pub strictness: Vec<StrictnessCheck>,
    pub ceilings: Vec<CeilingAudit>,
    pub pinching: PinchingAudit,
    pub pass: bool,
}

/// Every check that only needs the recorded series.
pub fn audit_series(
    series: &[InvariantRecord],
    params: &FlowParams,
    slack: f64,
    epsilon: f64,
    gamma: f64,
) -> anyhow::Result<SeriesAudit> {
    let first = series.first().context("cannot audit an empty series")?;
    let omega = unit_ball_volume(params.n);
    let mahler_ceiling = omega * omega;
    let gap = 1.0 - first.mahler / mahler_ceiling;
    let ellipsoidal = gap.abs() <= ELLIPSOID_GAP;

    let monotonicity = Series::ALL
        .iter()
        .map(|f| audit_monotone(series, *f, slack))
        .collect::<Result<Vec<_>, _>>()?;
    let strictness = monotonicity
        .iter()
        .filter(|r| r.series == Series::Mahler.name() || r.series == Series::IsoRatio.name())
        .map(|r| StrictnessCheck {
            series: r.series.clone(),
            expected: !ellipsoidal,
            total_change: r.total_change,
            pass: ellipsoidal || r.strictly_increasing,
        })
        .collect::<Vec<_>>();
    let ceilings = [
        (Series::Mahler, mahler_ceiling),
        (Series::IsoRatio, iso_ceiling(params.n, params.p)),
    ]
    .into_iter()
    .map(|(field, ceiling)| {
        let violations = ceiling_violations(series, field, ceiling, slack);
        CeilingAudit {
            series: field.name().to_string(),
            ceiling,
            worst_ratio: series
                .iter()
                .map(|r| field.get(r) / ceiling)
                .fold(f64::NEG_INFINITY, f64::max),
            pass: violations.is_empty(),
            violations,
        }
    })
    .collect::<Vec<_>>();

    let spec = PinchingSpec::new(epsilon, gamma, params)?;
    let initially_pinched = first.mahler > mahler_ceiling / (1.0 + epsilon);
    let max_distance = series.iter().map(|r| r.banach_mazur_upper).fold(0.0, f64::max);
    let distance_bound = spec.distance_bound();
    let pinching = PinchingAudit {
        spec,
        initially_pinched,
        distance_bound,
        max_distance,
        within_bound: max_distance <= distance_bound,
        informational: !(spec.admissible && initially_pinched),
    };

    let pass = monotonicity.iter().all(|r| r.pass)
        && strictness.iter().all(|s| s.pass)
        && ceilings.iter().all(|c| c.pass)
        && (pinching.informational || pinching.within_bound);
    Ok(SeriesAudit {
        records: series.len(),
        slack,
        ellipsoidal,
        monotonicity,
        strictness,
        ceilings,
        pinching,
        pass,
    })
}

/// Read a time-series table, checking the column order.
pub fn read_series(path: &Path) -> anyhow::Result<Vec<InvariantRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != RECORD_COLUMNS {
        bail!(
            "{}: columns {:?} do not match {:?}",
            path.display(),
            header,
            RECORD_COLUMNS
        );
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(k, row)| row.with_context(|| format!("{}: data row {}", path.display(), k + 1)))
        .collect()
}
