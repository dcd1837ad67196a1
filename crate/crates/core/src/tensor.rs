use nalgebra::DMatrix;

/// Symmetric tensor on the tangent space of S^n (n <= 2), written in an
/// orthonormal frame so that the round metric is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentTensor {
    dim: usize,
    xx: f64,
    xy: f64,
    yy: f64,
}

impl TangentTensor {
    pub fn scalar(value: f64) -> Self {
        Self {
            dim: 1,
            xx: value,
            xy: 0.0,
            yy: 0.0,
        }
    }

    pub fn planar(xx: f64, xy: f64, yy: f64) -> Self {
        Self { dim: 2, xx, xy, yy }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            xx: 0.0,
            xy: 0.0,
            yy: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (0, 1) | (1, 0) if self.dim == 2 => self.xy,
            (1, 1) if self.dim == 2 => self.yy,
            _ => panic!("index ({i}, {j}) out of range for a {}-dimensional tensor", self.dim),
        }
    }

    /// `self + c * identity`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = *self;
        out.xx += c;
        if self.dim == 2 {
            out.yy += c;
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            xx: self.xx * c,
            xy: self.xy * c,
            yy: self.yy * c,
        }
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.xx,
            _ => self.xx * self.yy - self.xy * self.xy,
        }
    }

    pub fn trace(&self) -> f64 {
        match self.dim {
            1 => self.xx,
            _ => self.xx + self.yy,
        }
    }

    /// Eigenvalues in ascending order (a single repeated value for n = 1).
    pub fn eigenvalues(&self) -> (f64, f64) {
        match self.dim {
            1 => (self.xx, self.xx),
            _ => {
                let mean = 0.5 * (self.xx + self.yy);
                let half_diff = 0.5 * (self.xx - self.yy);
                let radius = half_diff.hypot(self.xy);
                (mean - radius, mean + radius)
            }
        }
    }

    /// Largest eigenvalue of the cofactor matrix, i.e. of dS_n/dr.
    pub fn cofactor_max_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => 1.0,
            _ => self.eigenvalues().1,
        }
    }

    /// Frobenius distance between two tensors of the same dimension.
    pub fn distance(&self, other: &Self) -> f64 {
        let dxx = self.xx - other.xx;
        let dxy = self.xy - other.xy;
        let dyy = self.yy - other.yy;
        (dxx * dxx + 2.0 * dxy * dxy + dyy * dyy).sqrt()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self.dim {
            1 => DMatrix::from_element(1, 1, self.xx),
            _ => DMatrix::from_row_slice(2, 2, &[self.xx, self.xy, self.xy, self.yy]),
        }
    }
}

impl std::ops::Add for TangentTensor {
    type Output = TangentTensor;

    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Self {
            dim: self.dim,
            xx: self.xx + rhs.xx,
            xy: self.xy + rhs.xy,
            yy: self.yy + rhs.yy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_eigenvalues_match_characteristic_polynomial() {
        let t = TangentTensor::planar(3.0, 1.0, 1.0);
        let (lo, hi) = t.eigenvalues();
        assert!((lo * hi - t.det()).abs() < 1e-12);
        assert!((lo + hi - t.trace()).abs() < 1e-12);
        assert!(lo < hi);
    }

    #[test]
    fn shift_adds_identity() {
        let t = TangentTensor::planar(0.5, 0.25, -0.5).shifted(1.0);
        assert_eq!(t.get(0, 0), 1.5);
        assert_eq!(t.get(1, 1), 0.5);
        assert_eq!(t.get(0, 1), 0.25);
        assert_eq!(TangentTensor::scalar(2.0).shifted(1.0).det(), 3.0);
    }
}
