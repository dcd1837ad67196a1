//! Initial bodies for flow experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::Body;
use crate::error::{Error, Result};
use crate::gauge::{PowerSumGauge, PowerTerm};
use crate::harmonics::{self, ShCoeffs};
use crate::sphere::SphereGrid;

/// `Y(z)` scaled so that the zonal case is the Legendre polynomial
/// `P_l(cos theta)` on S^2 and `cos(l theta)` on S^1. Negative `m` selects
/// the sine-type harmonic.
pub fn harmonic(grid: &SphereGrid, degree: usize, order: i64) -> Result<Vec<f64>> {
    if order.unsigned_abs() as usize > degree {
        return Err(Error::InvalidParameter(format!(
            "harmonic order {order} exceeds degree {degree}"
        )));
    }
    match grid.dim() {
        1 => {
            if order != 0 {
                return Err(Error::InvalidParameter("circle harmonics take order 0".into()));
            }
            let l = degree as f64;
            Ok(grid.nodes().iter().map(|z| (l * z[1].atan2(z[0])).cos()).collect())
        }
        _ => {
            let mut c = ShCoeffs::zeros(degree);
            let i = harmonics::index(degree, order.unsigned_abs() as usize);
            let scale = (4.0 * PI / (2.0 * degree as f64 + 1.0)).sqrt();
            if order < 0 {
                c.sin[i] = scale;
            } else {
                c.cos[i] = scale;
            }
            Ok(grid
                .nodes()
                .iter()
                .map(|z| {
                    let theta = z[0].hypot(z[1]).atan2(z[2]);
                    harmonics::evaluate(&c, theta.cos(), theta.sin(), z[1].atan2(z[0])).value
                })
                .collect())
        }
    }
}

fn require_even(degree: usize) -> Result<()> {
    if degree % 2 == 1 {
        Err(Error::AntipodalSymmetry(format!(
            "odd-degree harmonic {degree} is odd under z -> -z"
        )))
    } else {
        Ok(())
    }
}

/// `s = 1 + amplitude * Y_lm` (see [`harmonic`]); convexity is checked.
pub fn harmonic_ball(grid: Arc<SphereGrid>, amplitude: f64, degree: usize, order: i64) -> Result<Body> {
    require_even(degree)?;
    let y = harmonic(&grid, degree, order)?;
    Body::new(grid, y.into_iter().map(|v| 1.0 + amplitude * v).collect())
}

/// Unit ball plus a random even-degree perturbation of degrees `2..=max_degree`
/// with sup-norm `amplitude` on the grid, drawn from a seeded ChaCha8 stream.
pub fn random_harmonic_ball(grid: Arc<SphereGrid>, amplitude: f64, max_degree: usize, seed: u64) -> Result<Body> {
    if max_degree < 2 {
        return Err(Error::InvalidParameter("random perturbation needs degree >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = vec![0.0; grid.len()];
    for degree in (2..=max_degree).step_by(2) {
        let orders: Vec<i64> = if grid.dim() == 1 {
            vec![0]
        } else {
            (-(degree as i64)..=degree as i64).collect()
        };
        for order in orders {
            let c: f64 = rng.gen_range(-1.0..1.0) / degree as f64;
            for (f, y) in field.iter_mut().zip(harmonic(&grid, degree, order)?) {
                *f += c * y;
            }
        }
    }
    let sup = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Body::new(grid, field.iter().map(|v| 1.0 + amplitude * v / sup).collect())
}

/// Smoothing exponent for a cap-edge width.
fn cap_exponent(width: f64) -> u32 {
    let q = (2.0 / width / 2.0).round() as u32 * 2;
    q.max(4)
}

/// Unit ball with opposite caps cut at height `1 - depth` along the last
/// axis, edges rounded by the gauge `(|x|^q + (x_n / (1 - depth))^q)^{1/q}`
/// with `q` the even integer nearest `2 / width` (at least 4).
pub fn smoothed_cap(grid: Arc<SphereGrid>, depth: f64, width: f64) -> Result<Body> {
    if !(depth > 0.0 && depth < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cap depth must lie in (0, 1), got {depth}"
        )));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing width must be positive, got {width}"
        )));
    }
    let q = cap_exponent(width);
    let axis = grid.ambient_dim() - 1;
    let gauge = PowerSumGauge {
        power: q,
        terms: vec![
            PowerTerm::Radial { coef: 1.0 },
            PowerTerm::Axis {
                coef: (1.0 - depth).powi(-(q as i32)),
                axis,
            },
        ],
    };
    Body::from_gauge(grid, &gauge)
}

/// Rounded cube: the gauge `((sum x_i^4 + eta |x|^4) / (1 + eta))^{1/4}`.
pub fn smoothed_l4(grid: Arc<SphereGrid>, eta: f64) -> Result<Body> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "l4 smoothing must be positive, got {eta}"
        )));
    }
    let d = grid.ambient_dim();
    let mut terms: Vec<PowerTerm> = (0..d)
        .map(|axis| PowerTerm::Axis {
            coef: 1.0 / (1.0 + eta),
            axis,
        })
        .collect();
    terms.push(PowerTerm::Radial {
        coef: eta / (1.0 + eta),
    });
    Body::from_gauge(grid, &PowerSumGauge { power: 4, terms })
}

/// Random `A` with `det A = 1` and condition number at most `max_condition`:
/// `A = R1 diag(d) R2` with Haar-ish rotations from Gram-Schmidt.
pub fn random_sl(d: usize, max_condition: f64, rng: &mut impl Rng) -> nalgebra::DMatrix<f64> {
    let rotation = |rng: &mut dyn rand::RngCore| {
        let cols: Vec<DVector<f64>> = (0..d)
            .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut q = nalgebra::DMatrix::from_columns(&cols).qr().q();
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    };
    let spread = max_condition.ln();
    let mut logs: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0) * spread).collect();
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    for l in logs.iter_mut() {
        *l -= lo;
    }
    let mean = logs.iter().sum::<f64>() / d as f64;
    let diag = DVector::from_iterator(d, logs.iter().map(|l| (l - mean).exp()));
    rotation(rng) * nalgebra::DMatrix::from_diagonal(&diag) * rotation(rng)
}
