//! Origin-symmetric, strictly convex bodies represented by their support
//! function sampled on a [`SphereGrid`].

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauge::{self, Gauge, SupportGauge};
use crate::sphere::{unit_ball_volume, Interpolant, ScalarField, SphereGrid};
use crate::tensor::TangentTensor;

/// Relative eigenvalue floor of the radii-of-curvature matrix.
pub const CONVEXITY_FLOOR: f64 = 1e-10;

/// Relative tolerance on `|s(z) - s(-z)|` accepted by [`Body::from_exact`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Extremes of the pointwise curvature fields over the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSummary {
    pub s_n_min: f64,
    pub s_n_max: f64,
    pub centro_affine_min: f64,
    pub centro_affine_max: f64,
    /// Smallest principal radius of curvature over all nodes.
    pub radius_min: f64,
    /// Largest principal radius of curvature over all nodes.
    pub radius_max: f64,
    /// Largest mean curvature `sum_i 1 / lambda_i`.
    pub mean_curvature_max: f64,
}

/// A smooth, origin-symmetric, strictly convex body.
#[derive(Debug, Clone)]
pub struct Body {
    grid: Arc<SphereGrid>,
    support: ScalarField,
    gradient: Vec<[f64; 2]>,
    radii: Vec<TangentTensor>,
    s_n: Vec<f64>,
    centro_affine: Vec<f64>,
    symmetrization: f64,
    interpolant: OnceLock<Interpolant>,
}

impl Body {
    /// Build a body from nodal support values. The values are symmetrised
    /// under `z -> -z` and, on the 2-sphere, band-limited to the grid's
    /// harmonic degree; the size of the symmetrisation is kept in
    /// [`Body::symmetrization`].
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField::new(&grid, values)?;
        let (sym, correction) = grid.symmetrize(&field);
        let projected = grid.project(&sym);
        let (values, _) = grid.symmetrize(&projected);
        Self::assemble(grid, values, correction)
    }

    /// Build a body from values that are already symmetric and band-limited
    /// (e.g. a stored snapshot); the values are used bit-for-bit.
    pub fn from_exact(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField::new(&grid, values)?;
        let scale = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let asym = (0..field.len())
            .map(|k| (field[k] - field[grid.antipode(k)]).abs())
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym));
        }
        Self::assemble(grid, field.into_inner(), 0.0)
    }

    pub fn from_support_fn(grid: Arc<SphereGrid>, f: impl Fn(&DVector<f64>) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn ball(grid: Arc<SphereGrid>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        let n = grid.len();
        Self::assemble(grid, vec![radius; n], 0.0)
    }

    /// Centered ellipsoid with the given semi-axes along the coordinate axes.
    pub fn ellipsoid(grid: Arc<SphereGrid>, semi_axes: &[f64]) -> Result<Self> {
        if semi_axes.len() != grid.ambient_dim() || semi_axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "ellipsoid needs {} positive semi-axes",
                grid.ambient_dim()
            )));
        }
        let axes = semi_axes.to_vec();
        Self::from_support_fn(grid, move |z| {
            z.iter().zip(&axes).map(|(z, a)| a * a * z * z).sum::<f64>().sqrt()
        })
    }

    /// Body whose gauge (Minkowski functional) is `g`.
    pub fn from_gauge<G: Gauge + ?Sized>(grid: Arc<SphereGrid>, g: &G) -> Result<Self> {
        let values = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, z)| gauge::support_from_gauge(g, z, k))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    fn assemble(grid: Arc<SphereGrid>, values: Vec<f64>, symmetrization: f64) -> Result<Self> {
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveSupport { node, value });
        }
        let (gradient, hessian) = grid.derivatives(&values);
        let radii: Vec<TangentTensor> = hessian.iter().zip(&values).map(|(h, s)| h.shifted(*s)).collect();
        let largest = radii.iter().map(|r| r.eigenvalues().1).fold(0.0, f64::max);
        let floor = CONVEXITY_FLOOR * largest;
        for (node, r) in radii.iter().enumerate() {
            let lo = r.eigenvalues().0;
            if !(lo > floor) {
                return Err(Error::NonConvex {
                    node,
                    eigenvalue: lo,
                    floor,
                });
            }
        }
        let n = grid.dim() as i32;
        let s_n: Vec<f64> = radii.iter().map(TangentTensor::det).collect();
        let centro_affine = s_n
            .iter()
            .zip(&values)
            .map(|(sn, s)| 1.0 / (sn * s.powi(n + 2)))
            .collect();
        Ok(Self {
            grid,
            support: ScalarField::from_vec_unchecked(values),
            gradient,
            radii,
            s_n,
            centro_affine,
            symmetrization,
            interpolant: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn support(&self) -> &ScalarField {
        &self.support
    }

    /// Largest `|s(z) - s(-z)| / 2` removed when the body was built.
    pub fn symmetrization(&self) -> f64 {
        self.symmetrization
    }

    /// Radii-of-curvature matrices `Hess s + s I` in the node frames.
    pub fn radii(&self) -> &[TangentTensor] {
        &self.radii
    }

    /// `S_n = det r`, the reciprocal Gauss curvature at each normal.
    pub fn s_n(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(self.s_n.clone())
    }

    /// Centro-affine curvature `K / s^{n+2} = 1 / (S_n s^{n+2})`.
    pub fn centro_affine_curvature(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(self.centro_affine.clone())
    }

    pub(crate) fn s_n_values(&self) -> &[f64] {
        &self.s_n
    }

    pub(crate) fn centro_affine_values(&self) -> &[f64] {
        &self.centro_affine
    }

    /// Smooth interpolant of the support function.
    pub fn interpolant(&self) -> &Interpolant {
        self.interpolant.get_or_init(|| self.grid.interpolant(&self.support))
    }

    /// `V = (1/(n+1)) * integral of s S_n`.
    pub fn volume(&self) -> f64 {
        let f: Vec<f64> = self.support.iter().zip(&self.s_n).map(|(s, sn)| s * sn).collect();
        self.grid.integrate(&f) / (self.dim() as f64 + 1.0)
    }

    /// Volume of the polar body through its radial function `1 / s`:
    /// `V(K*) = (1/(n+1)) * integral of s^{-(n+1)}`.
    pub fn polar_volume(&self) -> f64 {
        let n1 = self.dim() as i32 + 1;
        let f: Vec<f64> = self.support.iter().map(|s| s.powi(-n1)).collect();
        self.grid.integrate(&f) / n1 as f64
    }

    /// Mahler volume `V(K) V(K*)`.
    pub fn mahler_volume(&self) -> f64 {
        self.volume() * self.polar_volume()
    }

    /// `ω_{n+1}^2`, the Mahler volume of centered ellipsoids.
    pub fn mahler_ceiling(&self) -> f64 {
        unit_ball_volume(self.dim()).powi(2)
    }

    /// In- and circumradius `(min s, max s)`; both balls are centered at the
    /// origin for symmetric bodies.
    pub fn radii_bounds(&self) -> (f64, f64) {
        (self.support.min(), self.support.max())
    }

    /// Boundary point with outer normal `z_k`: `s(z) z + grad s(z)`.
    pub fn boundary_point(&self, k: usize) -> DVector<f64> {
        let z = self.grid.node(k);
        let frame = self.grid.frame(k);
        let g = self.gradient[k];
        let mut x = z * self.support[k];
        for (i, e) in frame.iter().enumerate() {
            x += e * g[i];
        }
        x
    }

    pub fn boundary_points(&self) -> Vec<DVector<f64>> {
        (0..self.grid.len()).map(|k| self.boundary_point(k)).collect()
    }

    /// Polar body sampled on the same grid via `s_{K*}(u) = 1 / ρ_K(u)`,
    /// `ρ_K(u) = min_{<u,z> > 0} s(z) / <u,z>`. The minimum is bracketed on
    /// the grid and then refined by Newton iteration on the smooth interpolant.
    pub fn polar(&self) -> Result<Body> {
        let gauge = SupportGauge {
            interpolant: self.interpolant(),
        };
        let nodes = self.grid.nodes();
        let mut values = Vec::with_capacity(nodes.len());
        for (k, u) in nodes.iter().enumerate() {
            let mut best = (f64::INFINITY, k);
            for (j, z) in nodes.iter().enumerate() {
                let c = u.dot(z);
                if c > 1e-3 {
                    let ratio = self.support[j] / c;
                    if ratio < best.0 {
                        best = (ratio, j);
                    }
                }
            }
            let (rho, _) = gauge::plane_minimum(&gauge, u, &nodes[best.1], k)?;
            values.push(1.0 / rho.min(best.0));
        }
        Body::new(self.grid.clone(), values)
    }

    /// Support function of `A K`: `s_{AK}(z) = |A^T z| s(A^T z / |A^T z|)`.
    pub fn linear_image(&self, a: &DMatrix<f64>) -> Result<Body> {
        let d = self.grid.ambient_dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::MatrixShape {
                rows: a.nrows(),
                cols: a.ncols(),
                expected: d,
            });
        }
        let det = a.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularMatrix(det.abs()));
        }
        let at = a.transpose();
        let interp = self.interpolant();
        let values = self
            .grid
            .nodes()
            .iter()
            .map(|z| {
                let w = &at * z;
                let r = w.norm();
                r * interp.value(&(w / r))
            })
            .collect();
        Body::new(self.grid.clone(), values)
    }

    /// `c K` for `c > 0`; exact on nodal values.
    pub fn scaled(&self, c: f64) -> Result<Body> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        let values = self.support.iter().map(|s| s * c).collect();
        Self::assemble(self.grid.clone(), values, 0.0)
    }

    pub fn curvature_summary(&self) -> CurvatureSummary {
        let mut out = CurvatureSummary {
            s_n_min: f64::INFINITY,
            s_n_max: f64::NEG_INFINITY,
            centro_affine_min: f64::INFINITY,
            centro_affine_max: f64::NEG_INFINITY,
            radius_min: f64::INFINITY,
            radius_max: f64::NEG_INFINITY,
            mean_curvature_max: f64::NEG_INFINITY,
        };
        for k in 0..self.grid.len() {
            out.s_n_min = out.s_n_min.min(self.s_n[k]);
            out.s_n_max = out.s_n_max.max(self.s_n[k]);
            out.centro_affine_min = out.centro_affine_min.min(self.centro_affine[k]);
            out.centro_affine_max = out.centro_affine_max.max(self.centro_affine[k]);
            let (lo, hi) = self.radii[k].eigenvalues();
            out.radius_min = out.radius_min.min(lo);
            out.radius_max = out.radius_max.max(hi);
            let mean = if self.dim() == 1 { 1.0 / lo } else { 1.0 / lo + 1.0 / hi };
            out.mean_curvature_max = out.mean_curvature_max.max(mean);
        }
        out
    }

    /// Centro-affine curvature of the interpolant at an arbitrary unit vector.
    pub fn centro_affine_at(&self, z: &DVector<f64>) -> f64 {
        let jet = self.interpolant().eval(z);
        let s = jet.value;
        let sn = jet.hessian.shifted(s).det();
        1.0 / (sn * s.powi(self.dim() as i32 + 2))
    }

    /// Minimum and maximum of the centro-affine curvature, located on the grid
    /// and then refined off-grid on the interpolant by compass search.
    pub fn centro_affine_extremes(&self) -> (f64, f64) {
        let f = |z: &DVector<f64>| self.centro_affine_at(z);
        let lo = refine_extremum(&self.grid, &self.centro_affine, &f, false);
        let hi = refine_extremum(&self.grid, &self.centro_affine, &f, true);
        (lo, hi)
    }
}

/// Compass search around the best node for the extremum of `f`.
pub(crate) fn refine_extremum(
    grid: &SphereGrid,
    nodal: &[f64],
    f: &dyn Fn(&DVector<f64>) -> f64,
    maximize: bool,
) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let start = (0..nodal.len())
        .min_by(|&a, &b| (sign * nodal[a]).total_cmp(&(sign * nodal[b])))
        .expect("grid is non-empty");
    let mut z = grid.node(start).clone();
    let mut best = sign * f(&z);
    let neighbour_gap = grid
        .neighbours(start)
        .iter()
        .map(|&j| (grid.node(j) - &z).norm())
        .fold(f64::INFINITY, f64::min);
    let mut step = 0.5 * neighbour_gap;
    let mut frame = tangent_frame(&z);
    while step > 1e-9 {
        let mut moved = false;
        for e in &frame {
            for dir in [1.0, -1.0] {
                let trial = &z + e * (dir * step);
                let trial = &trial / trial.norm();
                let v = sign * f(&trial);
                if v < best {
                    best = v;
                    z = trial;
                    moved = true;
                }
            }
        }
        if moved {
            frame = tangent_frame(&z);
        } else {
            step *= 0.5;
        }
    }
    sign * best
}

fn tangent_frame(z: &DVector<f64>) -> Vec<DVector<f64>> {
    gauge::orthogonal_complement(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_grid;
    use std::f64::consts::PI;

    fn circle(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(1, n).unwrap())
    }

    fn sphere(n: usize) -> Arc<SphereGrid> {
        Arc::new(build_grid(2, n).unwrap())
    }

    #[test]
    fn ball_radii_and_curvatures() {
        for grid in [circle(64), sphere(16)] {
            let n = grid.dim() as i32;
            let r = 1.7;
            let b = Body::ball(grid.clone(), r).unwrap();
            for t in b.radii() {
                let (lo, hi) = t.eigenvalues();
                assert!((lo - r).abs() < 1e-12 && (hi - r).abs() < 1e-12);
            }
            for v in b.s_n().iter() {
                assert!((v - r.powi(n)).abs() < 1e-11);
            }
            for v in b.centro_affine_curvature().iter() {
                assert!((v / r.powi(-(2 * n + 2)) - 1.0).abs() < 1e-12);
            }
            assert_eq!(b.radii_bounds(), (r, r));
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((Body::ball(circle(64), 1.0).unwrap().volume() - PI).abs() < 1e-12);
        assert!((Body::ball(sphere(16), 1.0).unwrap().volume() - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_support_is_rejected() {
        let g = circle(16);
        let mut v = vec![1.0; 16];
        v[3] = -0.5;
        v[11] = -0.5;
        assert!(matches!(Body::new(g, v), Err(Error::NonPositiveSupport { .. })));
    }

    #[test]
    fn non_convex_support_is_rejected() {
        let g = circle(64);
        // s = 1 + 0.2 cos 4θ has s'' + s = 1 - 3.0 cos 4θ < 0 somewhere
        let err = Body::from_support_fn(g, |z| {
            let t = z[1].atan2(z[0]);
            1.0 + 0.2 * (4.0 * t).cos()
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonConvex { .. }));
    }

    #[test]
    fn asymmetric_input_is_symmetrised() {
        let g = circle(32);
        let b = Body::from_support_fn(g.clone(), |z| 1.0 + 0.1 * z[0]).unwrap();
        assert!((b.symmetrization() - 0.1).abs() < 1e-12);
        for k in 0..g.len() {
            assert!((b.support()[k] - 1.0).abs() < 1e-14);
        }
        assert!(matches!(
            Body::from_exact(g, (0..32).map(|k| 1.0 + 0.01 * k as f64).collect()),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn identity_and_scalar_maps() {
        let g = sphere(16);
        let b = Body::ellipsoid(g, &[1.0, 1.2, 0.9]).unwrap();
        let same = b.linear_image(&DMatrix::identity(3, 3)).unwrap();
        for k in 0..b.support().len() {
            assert!((same.support()[k] - b.support()[k]).abs() < 1e-12);
        }
        let twice = b.linear_image(&(DMatrix::identity(3, 3) * 2.0)).unwrap();
        for k in 0..b.support().len() {
            assert!((twice.support()[k] - 2.0 * b.support()[k]).abs() < 1e-12);
        }
        assert!(matches!(
            b.linear_image(&DMatrix::zeros(3, 3)),
            Err(Error::SingularMatrix(_))
        ));
    }

    /// Principal radii of the ellipsoid `sqrt(z^T M z)` at `z`, from the
    /// Euclidean Hessian of the quadratic gauge restricted to the tangent plane.
    fn ellipsoid_radii(m: &DMatrix<f64>, z: &DVector<f64>, frame: &[DVector<f64>]) -> TangentTensor {
        let mz = m * z;
        let s = z.dot(&mz).sqrt();
        let h = (m - &mz * mz.transpose() / (s * s)) / s;
        let entry = |i: usize, j: usize| frame[i].dot(&(&h * &frame[j]));
        if frame.len() == 1 {
            TangentTensor::scalar(entry(0, 0))
        } else {
            TangentTensor::planar(entry(0, 0), entry(0, 1), entry(1, 1))
        }
    }

    #[test]
    fn ellipsoid_radii_match_quadratic_form() {
        let g = sphere(48);
        let axes = [1.0, 1.0, 2.0];
        let b = Body::ellipsoid(g.clone(), &axes).unwrap();
        let m = DMatrix::from_diagonal(&DVector::from_iterator(3, axes.iter().map(|a| a * a)));
        let mut worst = 0.0_f64;
        for k in 0..g.len() {
            let exact = ellipsoid_radii(&m, g.node(k), g.frame(k));
            worst = worst.max(b.radii()[k].distance(&exact) / exact.eigenvalues().1);
        }
        assert!(worst < 1e-4, "{worst}");
        let (lo, hi) = b.radii_bounds();
        assert!((lo - 1.0).abs() < 5e-3 && (hi - 2.0).abs() < 5e-3, "{lo} {hi}");
    }

    #[test]
    fn ellipsoid_volume() {
        let b = Body::ellipsoid(sphere(48), &[1.0, 1.3, 0.8]).unwrap();
        let exact = 4.0 * PI / 3.0 * 1.3 * 0.8;
        assert!((b.volume() / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ellipse_radius_of_curvature_range() {
        let b = Body::ellipsoid(circle(512), &[1.0, 2.0]).unwrap();
        let c = b.curvature_summary();
        // a^2 b^2 / s^3 runs from 4/8 to 4/1
        assert!((c.radius_min - 0.5).abs() < 1e-6, "{}", c.radius_min);
        assert!((c.radius_max - 4.0).abs() < 1e-5, "{}", c.radius_max);
        assert!(c.s_n_min <= c.s_n_max && c.centro_affine_min <= c.centro_affine_max);
    }

    #[test]
    fn polar_of_ellipse_inverts_axes() {
        let g = circle(256);
        let b = Body::ellipsoid(g.clone(), &[2.0, 0.5]).unwrap();
        let p = b.polar().unwrap();
        for (k, z) in g.nodes().iter().enumerate() {
            let exact = (z[0] * z[0] / 4.0 + 4.0 * z[1] * z[1]).sqrt();
            assert!((p.support()[k] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn polar_of_ball_is_reciprocal_ball() {
        for grid in [circle(64), sphere(16)] {
            let p = Body::ball(grid, 2.0).unwrap().polar().unwrap();
            for v in p.support().iter() {
                assert!((v - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unimodular_map_preserves_disk_area() {
        let b = Body::ball(circle(1024), 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let image = b.linear_image(&a).unwrap();
        assert!((image.volume() - PI).abs() < 1e-8, "{}", image.volume() - PI);
    }

    #[test]
    fn rounded_square_s1_matches_second_order_stencil() {
        // smoothed l4 ball; compare against central differences on a 4x finer circle
        let gauge = crate::gauge::PowerSumGauge {
            power: 4,
            terms: vec![
                crate::gauge::PowerTerm::Axis { coef: 1.0, axis: 0 },
                crate::gauge::PowerTerm::Axis { coef: 1.0, axis: 1 },
                crate::gauge::PowerTerm::Radial { coef: 0.5 },
            ],
        };
        let coarse = Body::from_gauge(circle(512), &gauge).unwrap();
        let fine = circle(2048);
        let fine_s: Vec<f64> = fine
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, z)| gauge::support_from_gauge(&gauge, z, k).unwrap())
            .collect();
        let h = 2.0 * PI / 2048.0;
        let s_n = coarse.s_n();
        for k in 0..512 {
            let j = 4 * k;
            let (m, p) = ((j + 2047) % 2048, (j + 1) % 2048);
            let stencil = (fine_s[p] - 2.0 * fine_s[j] + fine_s[m]) / (h * h) + fine_s[j];
            assert!(
                (s_n[k] - stencil).abs() < 1e-3 * stencil,
                "{k}: {} vs {stencil}",
                s_n[k]
            );
        }
    }
}
