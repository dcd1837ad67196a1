//! Initial-body descriptions as they appear on the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use caflow::{build_grid, seeds, Body};
use serde::Serialize;

use crate::snapshot;

/// How to build the body a run starts from.
///
/// Text form is `kind` or `kind:arg,arg,...`:
/// `ball[:R]`, `ellipsoid:a,b[,c]`, `harmonic:amplitude,degree[,order]`,
/// `random:amplitude[,max_degree]`, `cap:depth,width`, `l4:eta`, `file:path`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSpec {
    Ball {
        radius: f64,
    },
    Ellipsoid {
        semi_axes: Vec<f64>,
    },
    Harmonic {
        amplitude: f64,
        degree: usize,
        order: i64,
    },
    /// Random even harmonics of degrees `2..=max_degree`, drawn from the run's seed.
    Random {
        amplitude: f64,
        max_degree: usize,
    },
    /// Ball with opposite caps cut off and the edges rounded.
    Cap {
        depth: f64,
        width: f64,
    },
    L4 {
        eta: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("bad seed spec '{spec}': {reason}")]
    Syntax { spec: String, reason: String },
    #[error(transparent)]
    Body(#[from] caflow::Error),
    #[error(transparent)]
    Snapshot(#[from] snapshot::SnapshotError),
    #[error("seed file is a body on S^{found} but the run is on S^{expected}")]
    Dimension { expected: usize, found: usize },
}

fn numbers<T: FromStr>(spec: &str, args: &str, min: usize, max: usize) -> Result<Vec<T>, SeedError> {
    let syntax = |reason: String| SeedError::Syntax {
        spec: spec.to_string(),
        reason,
    };
    let parts: Vec<&str> = if args.is_empty() {
        vec![]
    } else {
        args.split(',').collect()
    };
    if parts.len() < min || parts.len() > max {
        let want = if min == max {
            format!("{min}")
        } else {
            format!("{min} to {max}")
        };
        return Err(syntax(format!("expected {want} arguments, got {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| syntax(format!("'{}' is not a valid number", p.trim())))
        })
        .collect()
}

impl FromStr for SeedSpec {
    type Err = SeedError;

    fn from_str(spec: &str) -> Result<Self, SeedError> {
        let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
        Ok(match kind {
            "ball" => {
                let r = numbers::<f64>(spec, args, 0, 1)?;
                SeedSpec::Ball {
                    radius: r.first().copied().unwrap_or(1.0),
                }
            }
            "ellipsoid" => SeedSpec::Ellipsoid {
                semi_axes: numbers(spec, args, 2, 3)?,
            },
            "harmonic" => {
                let v = numbers::<f64>(spec, args, 2, 3)?;
                let integer = |x: f64, what: &str| {
                    if x.fract() == 0.0 {
                        Ok(x)
                    } else {
                        Err(SeedError::Syntax {
                            spec: spec.to_string(),
                            reason: format!("{what} must be an integer"),
                        })
                    }
                };
                let degree = integer(v[1], "degree")?;
                if degree < 0.0 {
                    return Err(SeedError::Syntax {
                        spec: spec.to_string(),
                        reason: "degree must be non-negative".into(),
                    });
                }
                SeedSpec::Harmonic {
                    amplitude: v[0],
                    degree: degree as usize,
                    order: integer(v.get(2).copied().unwrap_or(0.0), "order")? as i64,
                }
            }
            "random" => {
                let (amplitude, max_degree) = match args.split_once(',') {
                    Some((a, d)) => (numbers::<f64>(spec, a, 1, 1)?[0], numbers::<usize>(spec, d, 1, 1)?[0]),
                    None => (numbers::<f64>(spec, args, 1, 1)?[0], 6),
                };
                SeedSpec::Random { amplitude, max_degree }
            }
            "cap" => {
                let v = numbers::<f64>(spec, args, 2, 2)?;
                SeedSpec::Cap {
                    depth: v[0],
                    width: v[1],
                }
            }
            "l4" => SeedSpec::L4 {
                eta: numbers::<f64>(spec, args, 1, 1)?[0],
            },
            "file" if !args.is_empty() => SeedSpec::File { path: args.into() },
            _ => {
                return Err(SeedError::Syntax {
                    spec: spec.to_string(),
                    reason: "kind must be one of ball, ellipsoid, harmonic, random, cap, l4, file:<path>".into(),
                })
            }
        })
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedSpec::Ball { radius } => write!(f, "ball:{radius}"),
            SeedSpec::Ellipsoid { semi_axes } => {
                let axes: Vec<String> = semi_axes.iter().map(|a| a.to_string()).collect();
                write!(f, "ellipsoid:{}", axes.join(","))
            }
            SeedSpec::Harmonic {
                amplitude,
                degree,
                order,
            } => write!(f, "harmonic:{amplitude},{degree},{order}"),
            SeedSpec::Random { amplitude, max_degree } => write!(f, "random:{amplitude},{max_degree}"),
            SeedSpec::Cap { depth, width } => write!(f, "cap:{depth},{width}"),
            SeedSpec::L4 { eta } => write!(f, "l4:{eta}"),
            SeedSpec::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl SeedSpec {
    /// Build the body on the default grid of `(n, resolution)`. File seeds
    /// keep the grid they were saved on.
    pub fn build(&self, n: usize, resolution: usize, rng_seed: u64) -> Result<Body, SeedError> {
        if let SeedSpec::File { path } = self {
            let body = snapshot::load_body(path)?;
            if body.dim() != n {
                return Err(SeedError::Dimension {
                    expected: n,
                    found: body.dim(),
                });
            }
            return Ok(body);
        }
        let grid = Arc::new(build_grid(n, resolution)?);
        Ok(match self {
            SeedSpec::Ball { radius } => Body::ball(grid, *radius)?,
            SeedSpec::Ellipsoid { semi_axes } => Body::ellipsoid(grid, semi_axes)?,
            SeedSpec::Harmonic {
                amplitude,
                degree,
                order,
            } => seeds::harmonic_ball(grid, *amplitude, *degree, *order)?,
            SeedSpec::Random { amplitude, max_degree } => {
                seeds::random_harmonic_ball(grid, *amplitude, *max_degree, rng_seed)?
            }
            SeedSpec::Cap { depth, width } => seeds::smoothed_cap(grid, *depth, *width)?,
            SeedSpec::L4 { eta } => seeds::smoothed_l4(grid, *eta)?,
            SeedSpec::File { .. } => unreachable!("handled above"),
        })
    }
}
