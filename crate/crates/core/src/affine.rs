//! SL(n+1) normalisation through the minimum-volume enclosing ellipsoid,
//! Banach-Mazur upper bounds and the pinching threshold `delta(eps)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::body::Body;
use crate::error::{Error, Result};
use crate::flow::FlowParams;

/// Relative volume tolerance of [`mvee`].
pub const MVEE_TOLERANCE: f64 = 1e-7;
pub const MVEE_MAX_ITERATIONS: usize = 100_000;

/// Admissibility threshold on `delta^{1+alpha}`.
pub const PINCHING_CEILING: f64 = 1.5;

/// Minimum-volume centered ellipsoid `{x : x^T Q x <= 1}` containing the
/// points and their reflections.
///
/// Solves `min -log det Q` subject to `x_i^T Q x_i <= 1` by log-barrier path
/// following on the `d(d+1)/2` entries of `Q`. The barrier weight is driven
/// down until the duality gap `m mu` falls below the volume tolerance, and the
/// result is rescaled so that the outermost point lies exactly on the boundary.
pub fn mvee(points: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let m = points.len();
    let d = points.first().map(|x| x.len()).ok_or(Error::DegenerateSpan)?;
    let reach = points.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !(reach > 0.0 && reach.is_finite()) {
        return Err(Error::DegenerateSpan);
    }
    let unit: Vec<DVector<f64>> = points.iter().map(|x| x / reach).collect();
    let scatter = unit.iter().fold(DMatrix::zeros(d, d), |acc, x| acc + x * x.transpose()) / m as f64;
    let scale = scatter.trace() / d as f64;
    if !(scale > 0.0) || scatter.determinant() <= 1e-12 * scale.powi(d as i32) {
        return Err(Error::DegenerateSpan);
    }
    // Q = sum_a q_a E_a over the symmetric basis, so x^T Q x = <features(x), q>
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let k = pairs.len();
    let features: Vec<f64> = unit
        .iter()
        .flat_map(|x| {
            pairs
                .iter()
                .map(move |&(i, j)| if i == j { x[i] * x[i] } else { 2.0 * x[i] * x[j] })
        })
        .collect();
    let assemble = |q: &DVector<f64>| {
        let mut out = DMatrix::zeros(d, d);
        for (a, &(i, j)) in pairs.iter().enumerate() {
            out[(i, j)] = q[a];
            out[(j, i)] = q[a];
        }
        out
    };
    let slacks = |q: &DVector<f64>| -> Vec<f64> {
        features
            .chunks_exact(k)
            .map(|f| 1.0 - f.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let objective = |q: &DVector<f64>, mu: f64| -> f64 {
        let Some(chol) = assemble(q).cholesky() else {
            return f64::INFINITY;
        };
        let mut f = -2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        for slack in slacks(q) {
            if !(slack > 0.0) {
                return f64::INFINITY;
            }
            f -= mu * slack.ln();
        }
        f
    };
    let mut q = DVector::from_iterator(k, pairs.iter().map(|&(i, j)| if i == j { 0.5 } else { 0.0 }));
    let mut mu = 1.0 / m as f64;
    let target = MVEE_TOLERANCE / m as f64;
    let mut iterations = 0;
    loop {
        loop {
            iterations += 1;
            if iterations > MVEE_MAX_ITERATIONS {
                return Err(Error::MveeNoConvergence {
                    iterations: MVEE_MAX_ITERATIONS,
                    residual: mu * m as f64,
                });
            }
            let qinv = assemble(&q).try_inverse().ok_or(Error::DegenerateSpan)?;
            // d/dq_a of -log det Q is -tr(Q^{-1} E_a); the Hessian is tr(Q^{-1} E_a Q^{-1} E_b)
            let mut grad = DVector::zeros(k);
            let mut hess = DMatrix::zeros(k, k);
            for (a, &(i, j)) in pairs.iter().enumerate() {
                grad[a] = if i == j { -qinv[(i, i)] } else { -2.0 * qinv[(i, j)] };
                for (b, &(r, c)) in pairs.iter().enumerate().skip(a) {
                    let mut t = qinv[(j, r)] * qinv[(c, i)] + qinv[(i, r)] * qinv[(c, j)];
                    if r != c {
                        t += qinv[(j, c)] * qinv[(r, i)] + qinv[(i, c)] * qinv[(r, j)];
                    }
                    hess[(a, b)] = if i == j { 0.5 * t } else { t };
                }
            }
            let mut g = vec![0.0; k];
            let mut h = vec![0.0; k * k];
            for (f, slack) in features.chunks_exact(k).zip(slacks(&q)) {
                let w = mu / slack;
                for a in 0..k {
                    g[a] += w * f[a];
                    let wa = w * f[a] / slack;
                    let row = &mut h[a * k..(a + 1) * k];
                    for b in a..k {
                        row[b] += wa * f[b];
                    }
                }
            }
            for a in 0..k {
                grad[a] += g[a];
                for b in a..k {
                    hess[(a, b)] += h[a * k + b];
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            let step = -hess.cholesky().ok_or(Error::DegenerateSpan)?.solve(&grad);
            let decrement = -grad.dot(&step);
            if decrement < 1e-12 {
                break;
            }
            let f0 = objective(&q, mu);
            let mut t = 1.0;
            while t >= 1e-10 {
                let trial = &q + &step * t;
                let ft = objective(&trial, mu);
                if ft < f0 && ft <= f0 - 0.25 * t * decrement {
                    q = trial;
                    break;
                }
                t *= 0.5;
            }
            // no representable decrease left at this barrier weight
            if t < 1e-10 {
                break;
            }
        }
        if mu <= target {
            break;
        }
        mu = (mu * 0.1).max(target);
    }
    let outer = slacks(&q).into_iter().map(|s| 1.0 - s).fold(0.0, f64::max);
    Ok(assemble(&q) / (outer * reach * reach))
}

/// A unimodular map normalising a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFrame {
    /// The map `A` with `det A = 1`.
    pub matrix: DMatrix<f64>,
    /// Quadratic form of the fitted enclosing ellipsoid.
    pub ellipsoid: DMatrix<f64>,
    /// `r_+ / r_-` of `A K`.
    pub ratio: f64,
    /// Whether the fitted frame was kept (otherwise `A = I` was better).
    pub fitted: bool,
}

impl AffineFrame {
    pub fn identity(d: usize, ratio: f64) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            ellipsoid: DMatrix::identity(d, d),
            ratio,
            fitted: false,
        }
    }
}

fn radius_ratio(b: &Body) -> f64 {
    let (lo, hi) = b.radii_bounds();
    hi / lo
}

/// Map the Lowner ellipsoid of the boundary samples to a ball: with
/// `Q` its form, `A = det(Q)^{-1/(2(n+1))} Q^{1/2}`. Falls back to the
/// identity when that gives a smaller `r_+ / r_-`.
pub fn normalize_sl(b: &Body) -> Result<(AffineFrame, Body)> {
    let d = b.grid().ambient_dim();
    let q = mvee(&b.boundary_points())?;
    let eig = SymmetricEigen::new(q.clone());
    if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateSpan);
    }
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let det: f64 = eig.eigenvalues.iter().product();
    let a = root * det.powf(-0.5 / d as f64);
    let image = b.linear_image(&a)?;
    let fitted = radius_ratio(&image);
    let own = radius_ratio(b);
    if fitted <= own {
        Ok((
            AffineFrame {
                matrix: a,
                ellipsoid: q,
                ratio: fitted,
                fitted: true,
            },
            image,
        ))
    } else {
        let mut frame = AffineFrame::identity(d, own);
        frame.ellipsoid = q;
        Ok((frame, b.clone()))
    }
}

/// `log(r_+ / r_-)` of the SL-normalised body: an upper bound on the
/// Banach-Mazur distance to the ball.
pub fn banach_mazur_upper(b: &Body) -> Result<f64> {
    Ok(normalize_sl(b)?.0.ratio.ln())
}

fn pinching_exponents(n: usize) -> (f64, f64) {
    let k = 3.0 * (n as f64 + 2.0);
    (2.0 / k, 4.0 / k)
}

/// `delta = exp(gamma eps^{2/(3(n+2))} |ln eps|^{4/(3(n+2))})`.
pub fn pinching_delta(epsilon: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let (a, b) = pinching_exponents(n);
    Ok((gamma * epsilon.powf(a) * epsilon.ln().abs().powf(b)).exp())
}

/// Largest `eps` on the increasing branch `(0, e^{-2}]` of `delta(eps)` with
/// `delta^{1+alpha} < 1.5`, by bisection.
pub fn admissible_epsilon(gamma: f64, params: &FlowParams) -> Result<f64> {
    let (a, b) = pinching_exponents(params.n);
    // d/d eps of eps^a |ln eps|^b vanishes at |ln eps| = b / a
    let peak = (-b / a).exp();
    let excess = |eps: f64| -> Result<f64> {
        Ok(pinching_delta(eps, gamma, params.n)?.powf(params.one_plus_alpha()) - PINCHING_CEILING)
    };
    if excess(peak)? < 0.0 {
        return Ok(peak);
    }
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, peak);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(lo)
}

/// The pinching hypothesis of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchingSpec {
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    /// `delta^{1+alpha} < 1.5`.
    pub admissible: bool,
}

impl PinchingSpec {
    pub fn new(epsilon: f64, gamma: f64, params: &FlowParams) -> Result<Self> {
        let delta = pinching_delta(epsilon, gamma, params.n)?;
        Ok(Self {
            epsilon,
            gamma,
            delta,
            alpha: params.alpha,
            admissible: delta.powf(params.one_plus_alpha()) < PINCHING_CEILING,
        })
    }

    /// `ln delta`, the bound the stability estimate places on
    /// [`banach_mazur_upper`] along a pinched run.
    pub fn distance_bound(&self) -> f64 {
        self.delta.ln()
    }
}

/// `V(K) V(K*) > omega^2 / (1 + eps)`.
pub fn mahler_pinched(b: &Body, epsilon: f64) -> bool {
    b.mahler_volume() > b.mahler_ceiling() / (1.0 + epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_grid, SphereGrid};
    use std::sync::Arc;

    fn sphere(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(2, n).unwrap())
    }

    #[test]
    fn cross_polytope_gives_identity() {
        let pts: Vec<DVector<f64>> = (0..3)
            .flat_map(|i| {
                let mut e = DVector::zeros(3);
                e[i] = 1.0;
                [e.clone(), -e]
            })
            .collect();
        let q = mvee(&pts).unwrap();
        assert!((q - DMatrix::identity(3, 3)).norm() < 1e-6);
    }

    #[test]
    fn recovers_sampled_ellipsoid() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5]);
        let g = sphere(16);
        let l = m.clone().cholesky().unwrap().l();
        let linv_t = l.try_inverse().unwrap().transpose();
        // x = L^{-T} z lies on x^T M x = 1
        let pts: Vec<DVector<f64>> = g.nodes().iter().map(|z| &linv_t * z).collect();
        let q = mvee(&pts).unwrap();
        assert!((&q - &m).norm() / m.norm() < 1e-5, "{}", (&q - &m).norm());
        for x in &pts {
            assert!(x.dot(&(&q * x)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rank_deficient_points_are_rejected() {
        let pts = vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
        ];
        assert_eq!(mvee(&pts), Err(Error::DegenerateSpan));
        assert_eq!(mvee(&[]), Err(Error::DegenerateSpan));
    }

    #[test]
    fn normalising_a_ball_keeps_it() {
        let b = Body::ball(sphere(16), 1.3).unwrap();
        let (frame, nb) = normalize_sl(&b).unwrap();
        assert!((frame.matrix.determinant() - 1.0).abs() < 1e-10);
        assert!((frame.ratio - 1.0).abs() < 1e-9);
        assert!(banach_mazur_upper(&b).unwrap().abs() < 1e-6);
        assert!((nb.volume() - b.volume()).abs() < 1e-9);
    }

    #[test]
    fn normalising_an_sl_ellipsoid_recovers_the_ball() {
        let g = sphere(32);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.25, 1.0, 0.8]));
        let e = Body::ball(g, 1.0).unwrap().linear_image(&d).unwrap();
        let (lo, hi) = e.radii_bounds();
        assert!(((hi / lo).ln() - 2.0 * 1.25_f64.ln()).abs() < 1e-2);
        assert!(banach_mazur_upper(&e).unwrap() < 1e-4);
        let (frame, nb) = normalize_sl(&e).unwrap();
        assert!((frame.matrix.determinant() - 1.0).abs() < 1e-10);
        let dev = nb.support().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-4, "{dev}");
        // A D is a rotation
        let ad = &frame.matrix * &d;
        assert!((ad.transpose() * &ad - DMatrix::identity(3, 3)).norm() < 1e-4);
    }

    #[test]
    fn ellipsoid_distance_before_and_after() {
        let b = Body::ellipsoid(sphere(32), &[1.0, 1.0, 2.0]).unwrap();
        let (lo, hi) = b.radii_bounds();
        assert!(((hi / lo).ln() - 2.0_f64.ln()).abs() < 1e-2);
        assert!(banach_mazur_upper(&b).unwrap() < 1e-4);
    }

    #[test]
    fn delta_formula() {
        let direct = ((1e-6_f64).powf(1.0 / 6.0) * (6.0 * 10.0_f64.ln()).cbrt()).exp();
        assert!((pinching_delta(1e-6, 1.0, 2).unwrap() - direct).abs() < 1e-14);
        assert!(pinching_delta(1e-300, 1.0, 2).unwrap() - 1.0 < 1e-20);
        assert!(pinching_delta(0.0, 1.0, 2).is_err());
        assert!(pinching_delta(1.0, 1.0, 2).is_err());
        assert!(pinching_delta(0.5, 0.0, 2).is_err());
    }

    #[test]
    fn admissible_epsilon_sits_on_the_threshold() {
        let f = FlowParams::contracting(3.0, 2).unwrap();
        let eps = admissible_epsilon(1.0, &f).unwrap();
        let spec = PinchingSpec::new(eps, 1.0, &f).unwrap();
        assert!(spec.admissible);
        assert!(!PinchingSpec::new(eps * (1.0 + 1e-9), 1.0, &f).unwrap().admissible);
        assert!((spec.delta.powf(3.0) - 1.5).abs() < 1e-9);
    }

    #[test]
    fn balls_and_ellipsoids_are_pinched() {
        let g = sphere(16);
        assert!(mahler_pinched(&Body::ball(g.clone(), 0.7).unwrap(), 1e-9));
        let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.1, 0.0, 0.0, 0.9, 0.0, 0.0, 0.2, 1.0 / 1.08]);
        let e = Body::ball(g, 1.0).unwrap().linear_image(&a).unwrap();
        assert!(mahler_pinched(&e, 1e-6));
    }
}
