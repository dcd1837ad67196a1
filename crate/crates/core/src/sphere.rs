//! Discretisations of S^1 and S^2: nodes, quadrature, tangent frames and the
//! second covariant derivative of nodal fields.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{self, ShCoeffs, ShTransform};
use crate::tensor::TangentTensor;

/// Everything needed to rebuild a grid bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridDescriptor {
    /// Uniform angles on the circle (n = 1).
    Circle { nodes: usize },
    /// Gauss-Legendre latitudes times uniform longitudes (n = 2), with the
    /// spherical-harmonic degree of the interpolant.
    LatLon { nlat: usize, nlon: usize, degree: usize },
}

#[derive(Debug, Clone)]
enum Layout {
    Circle {
        spacing: f64,
    },
    LatLon {
        nlat: usize,
        nlon: usize,
        cos_colat: Vec<f64>,
        sin_colat: Vec<f64>,
        longitudes: Vec<f64>,
        transform: ShTransform,
    },
}

/// Nodes, weights, frames and differential operators on S^n, n in {1, 2}.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    dim: usize,
    descriptor: GridDescriptor,
    nodes: Vec<DVector<f64>>,
    weights: Vec<f64>,
    frames: Vec<Vec<DVector<f64>>>,
    antipodes: Vec<usize>,
    layout: Layout,
}

/// Build the default grid for dimension `n`: `resolution` equally spaced
/// angles for n = 1, or `resolution` latitudes by `2 * resolution`
/// longitudes (harmonic degree `resolution / 2`) for n = 2.
pub fn build_grid(n: usize, resolution: usize) -> Result<SphereGrid> {
    match n {
        1 => SphereGrid::circle(resolution),
        2 => SphereGrid::lat_lon(resolution, 2 * resolution, resolution / 2),
        other => Err(Error::UnsupportedDimension(other)),
    }
}

impl SphereGrid {
    pub fn circle(count: usize) -> Result<Self> {
        if count % 2 == 1 {
            return Err(Error::AntipodalSymmetry(format!(
                "odd node count {count} on the circle"
            )));
        }
        if count < 8 {
            return Err(Error::InvalidResolution(format!(
                "circle needs at least 8 nodes, got {count}"
            )));
        }
        let spacing = 2.0 * PI / count as f64;
        let mut nodes = Vec::with_capacity(count);
        let mut frames = Vec::with_capacity(count);
        for k in 0..count {
            let (s, c) = (spacing * k as f64).sin_cos();
            nodes.push(DVector::from_vec(vec![c, s]));
            frames.push(vec![DVector::from_vec(vec![-s, c])]);
        }
        let antipodes = (0..count).map(|k| (k + count / 2) % count).collect();
        Ok(Self {
            dim: 1,
            descriptor: GridDescriptor::Circle { nodes: count },
            nodes,
            weights: vec![spacing; count],
            frames,
            antipodes,
            layout: Layout::Circle { spacing },
        })
    }

    pub fn lat_lon(nlat: usize, nlon: usize, degree: usize) -> Result<Self> {
        if nlat < 8 || nlon < 8 {
            return Err(Error::InvalidResolution(format!(
                "latitude-longitude grid needs at least 8 nodes per axis, got {nlat}x{nlon}"
            )));
        }
        if nlon % 2 == 1 {
            return Err(Error::AntipodalSymmetry(format!("odd longitude count {nlon}")));
        }
        if degree == 0 || degree >= nlat || 2 * degree >= nlon {
            return Err(Error::InvalidResolution(format!(
                "harmonic degree {degree} not supported by a {nlat}x{nlon} grid"
            )));
        }
        let (cos_colat, lat_weights) = harmonics::gauss_legendre(nlat);
        let sin_colat: Vec<f64> = cos_colat.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let longitudes: Vec<f64> = (0..nlon).map(|j| 2.0 * PI * j as f64 / nlon as f64).collect();
        let dphi = 2.0 * PI / nlon as f64;
        let mut nodes = Vec::with_capacity(nlat * nlon);
        let mut frames = Vec::with_capacity(nlat * nlon);
        let mut weights = Vec::with_capacity(nlat * nlon);
        let mut antipodes = Vec::with_capacity(nlat * nlon);
        for i in 0..nlat {
            let (ct, st) = (cos_colat[i], sin_colat[i]);
            for (j, &phi) in longitudes.iter().enumerate() {
                let (sp, cp) = phi.sin_cos();
                nodes.push(DVector::from_vec(vec![st * cp, st * sp, ct]));
                frames.push(vec![
                    DVector::from_vec(vec![ct * cp, ct * sp, -st]),
                    DVector::from_vec(vec![-sp, cp, 0.0]),
                ]);
                weights.push(lat_weights[i] * dphi);
                antipodes.push((nlat - 1 - i) * nlon + (j + nlon / 2) % nlon);
            }
        }
        let transform = ShTransform::new(degree, &cos_colat, &sin_colat, &lat_weights, nlon);
        Ok(Self {
            dim: 2,
            descriptor: GridDescriptor::LatLon { nlat, nlon, degree },
            nodes,
            weights,
            frames,
            antipodes,
            layout: Layout::LatLon {
                nlat,
                nlon,
                cos_colat,
                sin_colat,
                longitudes,
                transform,
            },
        })
    }

    pub fn from_descriptor(descriptor: GridDescriptor) -> Result<Self> {
        match descriptor {
            GridDescriptor::Circle { nodes } => Self::circle(nodes),
            GridDescriptor::LatLon { nlat, nlon, degree } => Self::lat_lon(nlat, nlon, degree),
        }
    }

    /// Dimension n of the sphere S^n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim + 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        self.descriptor
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &DVector<f64> {
        &self.nodes[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Orthonormal tangent frame at node `k`.
    pub fn frame(&self, k: usize) -> &[DVector<f64>] {
        &self.frames[k]
    }

    /// Index of the node at `-z_k`.
    pub fn antipode(&self, k: usize) -> usize {
        self.antipodes[k]
    }

    /// `|S^n|`.
    pub fn area(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// Degree of the smooth interpolant for n = 2 (None on the circle).
    pub fn harmonic_degree(&self) -> Option<usize> {
        match &self.layout {
            Layout::Circle { .. } => None,
            Layout::LatLon { transform, .. } => Some(transform.degree()),
        }
    }

    /// Largest magnitude of the discrete second-derivative symbol, i.e. the
    /// spectral radius of the discrete `Hess s` operator on high modes.
    pub fn operator_radius(&self) -> f64 {
        match &self.layout {
            Layout::Circle { spacing } => 16.0 / (3.0 * spacing * spacing),
            Layout::LatLon { transform, .. } => {
                let l = transform.degree() as f64;
                l * (l + 1.0)
            }
        }
    }

    /// Effective mesh width h, defined so that explicit midpoint stepping of
    /// `u_t = D * Hess u` on this grid is stable for `dt <= h^2 / D`.
    pub fn stability_spacing(&self) -> f64 {
        (2.0 / self.operator_radius()).sqrt()
    }

    /// Quadrature `sum_k w_k f_k`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        f.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    pub fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::FieldLength {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Replace `f` by `(f(z) + f(-z)) / 2`; returns the largest correction applied.
    pub fn symmetrize(&self, values: &[f64]) -> (Vec<f64>, f64) {
        let mut correction = 0.0_f64;
        let out = (0..values.len())
            .map(|k| {
                let a = values[k];
                let b = values[self.antipodes[k]];
                correction = correction.max(0.5 * (a - b).abs());
                0.5 * (a + b)
            })
            .collect();
        (out, correction)
    }

    /// Band-limit a nodal field to the interpolant degree (identity on the circle).
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        match &self.layout {
            Layout::Circle { .. } => values.to_vec(),
            Layout::LatLon { transform, .. } => transform.synthesize(&transform.analyze(values)),
        }
    }

    /// Tangential gradient and second covariant derivative of a nodal field,
    /// both in the node frames.
    pub fn derivatives(&self, values: &[f64]) -> (Vec<[f64; 2]>, Vec<TangentTensor>) {
        match &self.layout {
            Layout::Circle { spacing } => {
                let n = values.len();
                let h = *spacing;
                let at = |k: isize| values[k.rem_euclid(n as isize) as usize];
                let mut grad = Vec::with_capacity(n);
                let mut hess = Vec::with_capacity(n);
                for k in 0..n as isize {
                    let (m2, m1, c, p1, p2) = (at(k - 2), at(k - 1), at(k), at(k + 1), at(k + 2));
                    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
                    let d2 = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
                    grad.push([d1, 0.0]);
                    hess.push(TangentTensor::scalar(d2));
                }
                (grad, hess)
            }
            Layout::LatLon {
                nlon,
                cos_colat,
                sin_colat,
                transform,
                ..
            } => {
                let jets = transform.synthesize_jets(&transform.analyze(values));
                let mut grad = Vec::with_capacity(jets.len());
                let mut hess = Vec::with_capacity(jets.len());
                for (k, jet) in jets.iter().enumerate() {
                    let i = k / nlon;
                    let (g, h) = covariant_from_polar(jet, cos_colat[i], sin_colat[i]);
                    grad.push(g);
                    hess.push(h);
                }
                (grad, hess)
            }
        }
    }

    /// Second covariant derivative of `s` in the node frames.
    pub fn covariant_hessian(&self, s: &ScalarField) -> Vec<TangentTensor> {
        self.derivatives(s).1
    }

    /// Smooth interpolant of a nodal field: trigonometric for n = 1, truncated
    /// spherical harmonics for n = 2.
    pub fn interpolant(&self, values: &[f64]) -> Interpolant {
        match &self.layout {
            Layout::Circle { .. } => Interpolant::fourier(values),
            Layout::LatLon { transform, .. } => Interpolant::Harmonic(transform.analyze(values)),
        }
    }

    /// Neighbouring node indices used for local refinement of extrema.
    pub(crate) fn neighbours(&self, k: usize) -> Vec<usize> {
        match &self.layout {
            Layout::Circle { .. } => {
                let n = self.len();
                vec![(k + n - 1) % n, (k + 1) % n]
            }
            Layout::LatLon { nlat, nlon, .. } => {
                let (i, j) = (k / nlon, k % nlon);
                let mut out = vec![i * nlon + (j + nlon - 1) % nlon, i * nlon + (j + 1) % nlon];
                if i > 0 {
                    out.push((i - 1) * nlon + j);
                }
                if i + 1 < *nlat {
                    out.push((i + 1) * nlon + j);
                }
                out
            }
        }
    }

    /// Longitudes of the lat-lon layout (empty on the circle).
    pub fn longitudes(&self) -> &[f64] {
        match &self.layout {
            Layout::Circle { .. } => &[],
            Layout::LatLon { longitudes, .. } => longitudes,
        }
    }
}

/// `|S^n|`: 2 pi for the circle, 4 pi for the 2-sphere.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Volume of the unit ball in R^{n+1}.
pub fn unit_ball_volume(n: usize) -> f64 {
    sphere_area(n) / (n as f64 + 1.0)
}

fn covariant_from_polar(jet: &harmonics::PolarJet, cos_t: f64, sin_t: f64) -> ([f64; 2], TangentTensor) {
    let cot = cos_t / sin_t;
    let grad = [jet.d_theta, jet.d_phi / sin_t];
    let hxx = jet.d_theta_theta;
    let hxy = (jet.d_theta_phi - cot * jet.d_phi) / sin_t;
    let hyy = jet.d_phi_phi / (sin_t * sin_t) + cot * jet.d_theta;
    (grad, TangentTensor::planar(hxx, hxy, hyy))
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(grid: &SphereGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Self(values))
    }

    pub fn from_fn(grid: &SphereGrid, f: impl Fn(&DVector<f64>) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(f).collect())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for ScalarField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Value, ambient tangential gradient and covariant Hessian of an
/// interpolant at an arbitrary point of the sphere.
#[derive(Debug, Clone)]
pub struct LocalJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: TangentTensor,
    pub frame: Vec<DVector<f64>>,
}

/// Smooth interpolant of nodal data, evaluable off the grid.
#[derive(Debug, Clone)]
pub enum Interpolant {
    Fourier { cos: Vec<f64>, sin: Vec<f64> },
    Harmonic(ShCoeffs),
}

impl Interpolant {
    fn fourier(values: &[f64]) -> Self {
        let n = values.len();
        let half = n / 2;
        let mut cos = vec![0.0; half + 1];
        let mut sin = vec![0.0; half + 1];
        for (j, &v) in values.iter().enumerate() {
            let theta = 2.0 * PI * j as f64 / n as f64;
            for k in 0..=half {
                let (s, c) = (k as f64 * theta).sin_cos();
                cos[k] += v * c;
                sin[k] += v * s;
            }
        }
        for k in 0..=half {
            let scale = if k == 0 || (n % 2 == 0 && k == half) {
                1.0 / n as f64
            } else {
                2.0 / n as f64
            };
            cos[k] *= scale;
            sin[k] *= scale;
        }
        if n % 2 == 0 {
            sin[half] = 0.0;
        }
        Interpolant::Fourier { cos, sin }
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            Interpolant::Fourier { cos, sin } => {
                let theta = z[1].atan2(z[0]);
                (0..cos.len())
                    .map(|k| {
                        let (s, c) = (k as f64 * theta).sin_cos();
                        cos[k] * c + sin[k] * s
                    })
                    .sum()
            }
            Interpolant::Harmonic(coeffs) => {
                let theta = z[0].hypot(z[1]).atan2(z[2]);
                let (st, ct) = theta.sin_cos();
                harmonics::evaluate_value(coeffs, ct, st, z[1].atan2(z[0]))
            }
        }
    }

    /// Evaluate at a unit vector `z` (normalised internally).
    pub fn eval(&self, z: &DVector<f64>) -> LocalJet {
        match self {
            Interpolant::Fourier { cos, sin } => {
                let theta = z[1].atan2(z[0]);
                let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for k in 0..cos.len() {
                    let kf = k as f64;
                    let (s, c) = (kf * theta).sin_cos();
                    v += cos[k] * c + sin[k] * s;
                    d1 += kf * (-cos[k] * s + sin[k] * c);
                    d2 -= kf * kf * (cos[k] * c + sin[k] * s);
                }
                let (st, ct) = theta.sin_cos();
                let e = DVector::from_vec(vec![-st, ct]);
                LocalJet {
                    value: v,
                    gradient: &e * d1,
                    hessian: TangentTensor::scalar(d2),
                    frame: vec![e],
                }
            }
            Interpolant::Harmonic(coeffs) => {
                let rho = z[0].hypot(z[1]);
                let mut theta = rho.atan2(z[2]);
                // keep away from the coordinate singularity at the poles
                const POLE_GUARD: f64 = 1e-7;
                if theta < POLE_GUARD {
                    theta = POLE_GUARD;
                } else if theta > PI - POLE_GUARD {
                    theta = PI - POLE_GUARD;
                }
                let phi = z[1].atan2(z[0]);
                let (st, ct) = theta.sin_cos();
                let jet = harmonics::evaluate(coeffs, ct, st, phi);
                let (grad, hess) = covariant_from_polar(&jet, ct, st);
                let (sp, cp) = phi.sin_cos();
                let e_theta = DVector::from_vec(vec![ct * cp, ct * sp, -st]);
                let e_phi = DVector::from_vec(vec![-sp, cp, 0.0]);
                LocalJet {
                    value: jet.value,
                    gradient: &e_theta * grad[0] + &e_phi * grad[1],
                    hessian: hess,
                    frame: vec![e_theta, e_phi],
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_nodes_and_weights() {
        let g = build_grid(1, 360).unwrap();
        assert_eq!(g.len(), 360);
        for (k, z) in g.nodes().iter().enumerate() {
            let theta = 2.0 * PI * k as f64 / 360.0;
            assert!((z[0] - theta.cos()).abs() < 1e-15 && (z[1] - theta.sin()).abs() < 1e-15);
            assert!((g.weights()[k] - 2.0 * PI / 360.0).abs() < 1e-16);
        }
        assert!((g.integrate(&vec![1.0; 360]) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn odd_counts_break_antipodal_symmetry() {
        assert!(matches!(SphereGrid::circle(5), Err(Error::AntipodalSymmetry(_))));
        assert!(matches!(SphereGrid::circle(9), Err(Error::AntipodalSymmetry(_))));
        assert!(matches!(
            SphereGrid::lat_lon(8, 17, 4),
            Err(Error::AntipodalSymmetry(_))
        ));
        assert!(matches!(build_grid(3, 16), Err(Error::UnsupportedDimension(3))));
        assert!(matches!(build_grid(1, 6), Err(Error::InvalidResolution(_))));
    }

    #[test]
    fn sphere_weights_sum_to_area() {
        let g = SphereGrid::lat_lon(32, 64, 16).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 1e-10);
        for (k, z) in g.nodes().iter().enumerate() {
            assert!((z.norm() - 1.0).abs() < 1e-14);
            let a = g.antipode(k);
            assert!((z + g.node(a)).norm() < 1e-14);
            assert_eq!(g.weights()[k], g.weights()[a]);
        }
    }

    #[test]
    fn second_moment_of_z3() {
        let g = build_grid(2, 16).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|z| z[2] * z[2]).collect();
        assert!((g.integrate(&f) - 4.0 * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn constant_field_has_zero_hessian() {
        for g in [build_grid(1, 64).unwrap(), build_grid(2, 16).unwrap()] {
            let s = ScalarField::new(&g, vec![1.0; g.len()]).unwrap();
            for h in g.covariant_hessian(&s) {
                assert!(h.get(0, 0).abs() < 1e-12);
                if g.dim() == 2 {
                    assert!(h.get(0, 1).abs() < 1e-12 && h.get(1, 1).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frames_are_orthonormal_and_tangent() {
        let g = build_grid(2, 12).unwrap();
        for k in 0..g.len() {
            let f = g.frame(k);
            let z = g.node(k);
            assert!((f[0].norm() - 1.0).abs() < 1e-14 && (f[1].norm() - 1.0).abs() < 1e-14);
            assert!(f[0].dot(&f[1]).abs() < 1e-14);
            assert!(f[0].dot(z).abs() < 1e-14 && f[1].dot(z).abs() < 1e-14);
        }
    }

    #[test]
    fn fourier_interpolant_reproduces_nodes() {
        let g = build_grid(1, 32).unwrap();
        let v: Vec<f64> = g
            .nodes()
            .iter()
            .map(|z| 1.0 + 0.2 * z[0] * z[1] + 0.1 * z[0].powi(3))
            .collect();
        let it = g.interpolant(&v);
        for (k, z) in g.nodes().iter().enumerate() {
            assert!((it.value(z) - v[k]).abs() < 1e-13);
        }
    }
}
