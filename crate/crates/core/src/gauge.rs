//! Convex, positively 1-homogeneous functions on R^{n+1} and the radial
//! minimisation that turns a gauge into a support function.
//!
//! For a body L with gauge `g_L` the support function satisfies
//! `h_L(u) = 1 / min { g_L(x) : <u, x> = 1 }`. The same identity with
//! `g = h_K` (the gauge of the polar body) gives `h_{K*}`, so one solver
//! serves both seed construction and polarity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sphere::Interpolant;

/// A convex, positively 1-homogeneous function with first and second derivatives.
pub trait Gauge {
    /// Value, gradient and Hessian at a nonzero point.
    fn jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.jet(x).0
    }
}

/// `g(x) = sqrt(x^T Q x)` for a positive-definite `Q`.
#[derive(Debug, Clone)]
pub struct QuadraticGauge {
    pub form: DMatrix<f64>,
}

impl Gauge for QuadraticGauge {
    fn jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let qx = &self.form * x;
        let g = x.dot(&qx).sqrt();
        let grad = &qx / g;
        let hess = (&self.form - &grad * grad.transpose()) / g;
        (g, grad, hess)
    }
}

/// One summand of a [`PowerSumGauge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerTerm {
    /// `coef * |x|^q`
    Radial { coef: f64 },
    /// `coef * x_axis^q`
    Axis { coef: f64, axis: usize },
}

/// `g(x) = (sum_t term_t(x))^{1/q}` with a common even power `q`.
#[derive(Debug, Clone)]
pub struct PowerSumGauge {
    pub power: u32,
    pub terms: Vec<PowerTerm>,
}

impl Gauge for PowerSumGauge {
    fn jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = x.len();
        let q = self.power as f64;
        let mut f = 0.0;
        let mut df = DVector::zeros(d);
        let mut d2f = DMatrix::zeros(d, d);
        let r2 = x.norm_squared();
        for term in &self.terms {
            match *term {
                PowerTerm::Radial { coef } => {
                    let rq2 = r2.powf(0.5 * q - 1.0);
                    f += coef * rq2 * r2;
                    df += x * (coef * q * rq2);
                    for i in 0..d {
                        d2f[(i, i)] += coef * q * rq2;
                    }
                    if self.power > 2 {
                        let rq4 = r2.powf(0.5 * q - 2.0);
                        d2f += x * x.transpose() * (coef * q * (q - 2.0) * rq4);
                    }
                }
                PowerTerm::Axis { coef, axis } => {
                    let v = x[axis];
                    f += coef * v.powi(self.power as i32);
                    df[axis] += coef * q * v.powi(self.power as i32 - 1);
                    d2f[(axis, axis)] += coef * q * (q - 1.0) * v.powi(self.power as i32 - 2);
                }
            }
        }
        let g = f.powf(1.0 / q);
        let a = g / (q * f);
        let grad = &df * a;
        let hess = &d2f * a + &df * df.transpose() * (a * (1.0 / q - 1.0) / f);
        (g, grad, hess)
    }
}

/// The 1-homogeneous extension `x -> |x| s(x / |x|)` of a smooth support
/// function. Its gradient at `z` is the boundary point with outer normal
/// `z`, and its Hessian restricted to `z^perp` is the radii-of-curvature
/// matrix divided by `|x|`.
pub struct SupportGauge<'a> {
    pub interpolant: &'a Interpolant,
}

impl Gauge for SupportGauge<'_> {
    fn jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let r = x.norm();
        let z = x / r;
        let jet = self.interpolant.eval(&z);
        let s = jet.value;
        let grad = &z * s + &jet.gradient;
        let d = x.len();
        let mut hess = DMatrix::zeros(d, d);
        let radii = jet.hessian.shifted(s);
        for (i, ei) in jet.frame.iter().enumerate() {
            for (j, ej) in jet.frame.iter().enumerate() {
                hess += ei * ej.transpose() * (radii.get(i, j) / r);
            }
        }
        (r * s, grad, hess)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = x.norm();
        r * self.interpolant.value(&(x / r))
    }
}

/// Orthonormal basis of the hyperplane orthogonal to the unit vector `u`.
pub fn orthogonal_complement(u: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = u.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d - 1);
    // Gram-Schmidt against u, starting from the coordinate axes least aligned with u
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()));
    for &axis in &axes {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        v -= u * u.dot(&v);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    basis
}

/// Minimise `g` over the affine hyperplane `{x : <u, x> = 1}` by damped
/// Newton, starting from the ray through `start` (which must satisfy
/// `<u, start> > 0`). Returns the minimum value and the minimiser.
pub fn plane_minimum<G: Gauge + ?Sized>(
    gauge: &G,
    u: &DVector<f64>,
    start: &DVector<f64>,
    tag: usize,
) -> Result<(f64, DVector<f64>)> {
    const MAX_ITER: usize = 60;
    let basis = orthogonal_complement(u);
    let m = basis.len();
    let mut x = start / u.dot(start);
    let (mut f, mut grad, mut hess) = gauge.jet(&x);
    for _ in 0..MAX_ITER {
        let gy = DVector::from_iterator(m, basis.iter().map(|b| b.dot(&grad)));
        let hy = DMatrix::from_fn(m, m, |i, j| basis[i].dot(&(&hess * &basis[j])));
        let step = match hy.clone().cholesky() {
            Some(chol) => -chol.solve(&gy),
            None => -&gy / hy.diagonal().iter().map(|v| v.abs()).fold(1e-12, f64::max),
        };
        let decrement = -gy.dot(&step);
        if decrement <= 1e-20 * f * f || step.norm() < 1e-14 * x.norm() {
            return Ok((f, x));
        }
        let direction = basis
            .iter()
            .zip(step.iter())
            .fold(DVector::zeros(x.len()), |acc, (b, c)| acc + b * *c);
        let mut t = 1.0;
        loop {
            let trial = &x + &direction * t;
            let ft = gauge.value(&trial);
            if ft >= f && decrement <= 1e-12 * f * f {
                // converged to the resolution of f
                return Ok((f, x));
            }
            if ft.is_finite() && ft <= f - 1e-4 * t * decrement {
                x = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // no further progress possible at working precision
                return Ok((f, x));
            }
        }
        let next = gauge.jet(&x);
        f = next.0;
        grad = next.1;
        hess = next.2;
    }
    Err(Error::RadialSolve {
        node: tag,
        iterations: MAX_ITER,
    })
}

/// Support function of the body whose gauge is `gauge`, in direction `u`.
pub fn support_from_gauge<G: Gauge + ?Sized>(gauge: &G, u: &DVector<f64>, tag: usize) -> Result<f64> {
    let (rho, _) = plane_minimum(gauge, u, u, tag)?;
    Ok(1.0 / rho)
}
