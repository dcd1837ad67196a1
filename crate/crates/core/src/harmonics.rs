//! Real spherical harmonics on S^2 and the Gauss-Legendre latitude-longitude
//! transform used as the smooth interpolant for n = 2.
//!
//! Basis: `Y_l0 = P_l^0`, `Y_lm^c = sqrt(2) P_l^m cos(m phi)`,
//! `Y_lm^s = sqrt(2) P_l^m sin(m phi)` with `P_l^m` the orthonormalised
//! associated Legendre functions (no Condon-Shortley phase). The basis is
//! orthonormal in L^2(S^2).

use std::f64::consts::PI;

/// Gauss-Legendre nodes (descending, i.e. north to south) and weights on [-1, 1].
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let half = count.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (count as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(count, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[count - 1 - i] = -x;
        weights[count - 1 - i] = w;
    }
    if count % 2 == 1 {
        nodes[count / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[inline]
pub fn index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

pub fn coefficient_count(degree: usize) -> usize {
    index(degree, degree) + 1
}

/// Normalised associated Legendre functions and their first two colatitude
/// derivatives, evaluated at one colatitude.
#[derive(Debug, Clone)]
pub struct LegendreColumn {
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub d2p: Vec<f64>,
}

impl LegendreColumn {
    pub fn new(cos_theta: f64, sin_theta: f64, degree: usize) -> Self {
        let p = Self::values(cos_theta, sin_theta, degree);
        let dp = ladder(&p, degree);
        let d2p = ladder(&dp, degree);
        Self { p, dp, d2p }
    }

    /// The normalised `P_l^m` alone.
    pub fn values(cos_theta: f64, sin_theta: f64, degree: usize) -> Vec<f64> {
        let size = coefficient_count(degree);
        let mut p = vec![0.0; size];
        p[0] = (0.25 / PI).sqrt();
        for m in 1..=degree {
            let mf = m as f64;
            p[index(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * p[index(m - 1, m - 1)];
        }
        for m in 0..degree {
            let mf = m as f64;
            p[index(m + 1, m)] = (2.0 * mf + 3.0).sqrt() * cos_theta * p[index(m, m)];
            for l in (m + 2)..=degree {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                p[index(l, m)] = a * (cos_theta * p[index(l - 1, m)] - b * p[index(l - 2, m)]);
            }
        }
        p
    }
}

/// d/dtheta applied along each degree using the raising/lowering relation
/// `dP_l^m = (sqrt((l+m)(l-m+1)) P_l^{m-1} - sqrt((l-m)(l+m+1)) P_l^{m+1}) / 2`
/// with the extension `P_l^{-1} = -P_l^1`.
fn ladder(values: &[f64], degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for l in 0..=degree {
        let lf = l as f64;
        for m in 0..=l {
            let mf = m as f64;
            let lower = if m == 0 {
                if l == 0 {
                    0.0
                } else {
                    -values[index(l, 1)]
                }
            } else {
                values[index(l, m - 1)]
            };
            let upper = if m < l { values[index(l, m + 1)] } else { 0.0 };
            out[index(l, m)] =
                0.5 * (((lf + mf) * (lf - mf + 1.0)).sqrt() * lower - ((lf - mf) * (lf + mf + 1.0)).sqrt() * upper);
        }
    }
    out
}

/// Coefficients of a real spherical-harmonic expansion up to `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffs {
    pub degree: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl ShCoeffs {
    pub fn zeros(degree: usize) -> Self {
        let size = coefficient_count(degree);
        Self {
            degree,
            cos: vec![0.0; size],
            sin: vec![0.0; size],
        }
    }

    /// L^2 energy in degree `l`.
    pub fn degree_energy(&self, l: usize) -> f64 {
        (0..=l)
            .map(|m| {
                let i = index(l, m);
                self.cos[i] * self.cos[i] + self.sin[i] * self.sin[i]
            })
            .sum()
    }
}

/// Value and raw spherical-coordinate derivatives of a field at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolarJet {
    pub value: f64,
    pub d_theta: f64,
    pub d_phi: f64,
    pub d_theta_theta: f64,
    pub d_theta_phi: f64,
    pub d_phi_phi: f64,
}

#[inline]
fn basis_weight(m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

/// Evaluate an expansion (and derivatives) at an arbitrary point.
pub fn evaluate(coeffs: &ShCoeffs, cos_theta: f64, sin_theta: f64, phi: f64) -> PolarJet {
    let column = LegendreColumn::new(cos_theta, sin_theta, coeffs.degree);
    let mut jet = PolarJet::default();
    for m in 0..=coeffs.degree {
        let (mut c0, mut s0, mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for l in m..=coeffs.degree {
            let i = index(l, m);
            c0 += coeffs.cos[i] * column.p[i];
            s0 += coeffs.sin[i] * column.p[i];
            c1 += coeffs.cos[i] * column.dp[i];
            s1 += coeffs.sin[i] * column.dp[i];
            c2 += coeffs.cos[i] * column.d2p[i];
            s2 += coeffs.sin[i] * column.d2p[i];
        }
        let w = basis_weight(m);
        let mf = m as f64;
        let (sn, cs) = (mf * phi).sin_cos();
        jet.value += w * (c0 * cs + s0 * sn);
        jet.d_theta += w * (c1 * cs + s1 * sn);
        jet.d_theta_theta += w * (c2 * cs + s2 * sn);
        jet.d_phi += w * mf * (-c0 * sn + s0 * cs);
        jet.d_theta_phi += w * mf * (-c1 * sn + s1 * cs);
        jet.d_phi_phi -= w * mf * mf * (c0 * cs + s0 * sn);
    }
    jet
}

/// Value of the expansion alone; cheaper than [`evaluate`].
pub fn evaluate_value(coeffs: &ShCoeffs, cos_theta: f64, sin_theta: f64, phi: f64) -> f64 {
    let p = LegendreColumn::values(cos_theta, sin_theta, coeffs.degree);
    let mut value = 0.0;
    for m in 0..=coeffs.degree {
        let (mut c0, mut s0) = (0.0, 0.0);
        for l in m..=coeffs.degree {
            let i = index(l, m);
            c0 += coeffs.cos[i] * p[i];
            s0 += coeffs.sin[i] * p[i];
        }
        let (sn, cs) = (m as f64 * phi).sin_cos();
        value += basis_weight(m) * (c0 * cs + s0 * sn);
    }
    value
}

/// Quadrature-based analysis/synthesis on a Gauss-Legendre x uniform-longitude grid.
#[derive(Debug, Clone)]
pub struct ShTransform {
    degree: usize,
    nlat: usize,
    nlon: usize,
    lat_weights: Vec<f64>,
    columns: Vec<LegendreColumn>,
    cos_table: Vec<Vec<f64>>,
    sin_table: Vec<Vec<f64>>,
}

impl ShTransform {
    pub fn new(degree: usize, cos_colat: &[f64], sin_colat: &[f64], lat_weights: &[f64], nlon: usize) -> Self {
        let columns = cos_colat
            .iter()
            .zip(sin_colat)
            .map(|(&c, &s)| LegendreColumn::new(c, s, degree))
            .collect();
        let mut cos_table = Vec::with_capacity(degree + 1);
        let mut sin_table = Vec::with_capacity(degree + 1);
        for m in 0..=degree {
            let (c, s): (Vec<f64>, Vec<f64>) = (0..nlon)
                .map(|j| {
                    let phi = 2.0 * PI * j as f64 / nlon as f64;
                    let (s, c) = (m as f64 * phi).sin_cos();
                    (c, s)
                })
                .unzip();
            cos_table.push(c);
            sin_table.push(s);
        }
        Self {
            degree,
            nlat: cos_colat.len(),
            nlon,
            lat_weights: lat_weights.to_vec(),
            columns,
            cos_table,
            sin_table,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Project nodal values onto the harmonic basis by quadrature.
    pub fn analyze(&self, values: &[f64]) -> ShCoeffs {
        let mut out = ShCoeffs::zeros(self.degree);
        let dphi = 2.0 * PI / self.nlon as f64;
        for i in 0..self.nlat {
            let row = &values[i * self.nlon..(i + 1) * self.nlon];
            let column = &self.columns[i];
            let w = self.lat_weights[i] * dphi;
            for m in 0..=self.degree {
                let (mut a, mut b) = (0.0, 0.0);
                for (j, &v) in row.iter().enumerate() {
                    a += v * self.cos_table[m][j];
                    b += v * self.sin_table[m][j];
                }
                let scale = w * basis_weight(m);
                for l in m..=self.degree {
                    let k = index(l, m);
                    out.cos[k] += scale * a * column.p[k];
                    if m > 0 {
                        out.sin[k] += scale * b * column.p[k];
                    }
                }
            }
        }
        out
    }

    pub fn synthesize(&self, coeffs: &ShCoeffs) -> Vec<f64> {
        self.synthesize_jets(coeffs).into_iter().map(|j| j.value).collect()
    }

    /// Values and spherical-coordinate derivatives at every node, row-major by latitude.
    pub fn synthesize_jets(&self, coeffs: &ShCoeffs) -> Vec<PolarJet> {
        assert_eq!(coeffs.degree, self.degree);
        let mut out = vec![PolarJet::default(); self.nlat * self.nlon];
        for i in 0..self.nlat {
            let column = &self.columns[i];
            for m in 0..=self.degree {
                let (mut c0, mut s0, mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for l in m..=self.degree {
                    let k = index(l, m);
                    c0 += coeffs.cos[k] * column.p[k];
                    s0 += coeffs.sin[k] * column.p[k];
                    c1 += coeffs.cos[k] * column.dp[k];
                    s1 += coeffs.sin[k] * column.dp[k];
                    c2 += coeffs.cos[k] * column.d2p[k];
                    s2 += coeffs.sin[k] * column.d2p[k];
                }
                let w = basis_weight(m);
                let mf = m as f64;
                for j in 0..self.nlon {
                    let (cs, sn) = (self.cos_table[m][j], self.sin_table[m][j]);
                    let jet = &mut out[i * self.nlon + j];
                    jet.value += w * (c0 * cs + s0 * sn);
                    jet.d_theta += w * (c1 * cs + s1 * sn);
                    jet.d_theta_theta += w * (c2 * cs + s2 * sn);
                    jet.d_phi += w * mf * (-c0 * sn + s0 * cs);
                    jet.d_theta_phi += w * mf * (-c1 * sn + s1 * cs);
                    jet.d_phi_phi -= w * mf * mf * (c0 * cs + s0 * sn);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // x^22 is degree 22 <= 2*12 - 1
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((integral - 2.0 / 23.0).abs() < 1e-14);
        for i in 0..12 {
            assert_eq!(x[i], -x[11 - i]);
        }
    }

    #[test]
    fn low_degree_functions_have_closed_forms() {
        let theta: f64 = 0.7;
        let col = LegendreColumn::new(theta.cos(), theta.sin(), 3);
        let y10 = (3.0 / (4.0 * PI)).sqrt() * theta.cos();
        assert!((col.p[index(1, 0)] - y10).abs() < 1e-14);
        // P_2^0 = sqrt(5/4pi) (3cos^2 - 1)/2
        let y20 = (5.0 / (4.0 * PI)).sqrt() * 0.5 * (3.0 * theta.cos().powi(2) - 1.0);
        assert!((col.p[index(2, 0)] - y20).abs() < 1e-14);
        let dy20 = -(5.0 / (4.0 * PI)).sqrt() * 3.0 * theta.cos() * theta.sin();
        assert!((col.dp[index(2, 0)] - dy20).abs() < 1e-14);
    }

    #[test]
    fn ladder_derivatives_match_finite_differences() {
        let degree = 9;
        let theta: f64 = 1.1;
        let h = 1e-5;
        let at = |t: f64| LegendreColumn::new(t.cos(), t.sin(), degree);
        let (c, cp, cm) = (at(theta), at(theta + h), at(theta - h));
        for k in 0..coefficient_count(degree) {
            let fd1 = (cp.p[k] - cm.p[k]) / (2.0 * h);
            let fd2 = (cp.p[k] - 2.0 * c.p[k] + cm.p[k]) / (h * h);
            assert!((c.dp[k] - fd1).abs() < 1e-8, "k={k}");
            assert!((c.d2p[k] - fd2).abs() < 1e-4, "k={k}");
        }
    }

    #[test]
    fn analysis_inverts_synthesis_below_the_quadrature_degree() {
        let nlat = 16;
        let nlon = 32;
        let degree = 12;
        let (x, w) = gauss_legendre(nlat);
        let s: Vec<f64> = x.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let t = ShTransform::new(degree, &x, &s, &w, nlon);
        let mut c = ShCoeffs::zeros(degree);
        for (k, (a, b)) in c.cos.iter_mut().zip(c.sin.iter_mut()).enumerate() {
            *a = 1.0 / (1.0 + k as f64);
            *b = 0.5 / (2.0 + k as f64);
        }
        for l in 0..=degree {
            c.sin[index(l, 0)] = 0.0;
        }
        let back = t.analyze(&t.synthesize(&c));
        for k in 0..c.cos.len() {
            assert!((back.cos[k] - c.cos[k]).abs() < 1e-13);
            assert!((back.sin[k] - c.sin[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn point_evaluation_agrees_with_grid_synthesis() {
        let nlat = 10;
        let nlon = 20;
        let (x, w) = gauss_legendre(nlat);
        let s: Vec<f64> = x.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let t = ShTransform::new(6, &x, &s, &w, nlon);
        let mut c = ShCoeffs::zeros(6);
        c.cos[index(4, 2)] = 0.3;
        c.sin[index(5, 3)] = -0.2;
        c.cos[0] = 1.0;
        let jets = t.synthesize_jets(&c);
        let i = 3;
        let j = 7;
        let phi = 2.0 * PI * j as f64 / nlon as f64;
        let p = evaluate(&c, x[i], s[i], phi);
        let g = jets[i * nlon + j];
        for (a, b) in [
            (p.value, g.value),
            (p.d_theta, g.d_theta),
            (p.d_phi, g.d_phi),
            (p.d_theta_theta, g.d_theta_theta),
            (p.d_theta_phi, g.d_theta_phi),
            (p.d_phi_phi, g.d_phi_phi),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
