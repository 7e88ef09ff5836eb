//! Symmetric 3x3 tensors over the reals and the complex numbers.
//!
//! The measurable object description used throughout this crate is a complex
//! symmetric rank-2 tensor, so only six independent entries are stored. The
//! module provides the three principal invariants, a closed-form eigenvalue
//! solve, and rotation by an orthogonal matrix.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum allowed deviation of `r^T r` from the identity before a rotation
/// argument is rejected.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    /// The matrix passed to [`RealTensor3::rotate`] is not orthogonal:
    /// `max |r^T r - I|` exceeded [`ORTHOGONALITY_TOL`].
    #[error("rotation matrix is not orthogonal (max |r^T r - I| = {deviation:.3e})")]
    NonOrthogonal { deviation: f64 },
}

/// Real symmetric 3x3 tensor stored as its six independent entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

/// The three principal invariants of a real symmetric tensor:
/// `i1 = tr(A)`, `i2 = (tr(A)^2 - tr(A^2)) / 2`, `i3 = det(A)`.
///
/// They are the coefficients of the characteristic polynomial
/// `l^3 - i1 l^2 + i2 l - i3` and are unchanged by rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl RealTensor3 {
    pub const ZERO: Self = Self::diagonal(0.0, 0.0, 0.0);
    pub const IDENTITY: Self = Self::diagonal(1.0, 1.0, 1.0);

    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        Self { xx, yy, zz, xy, xz, yz }
    }

    pub const fn diagonal(xx: f64, yy: f64, zz: f64) -> Self {
        Self { xx, yy, zz, xy: 0.0, xz: 0.0, yz: 0.0 }
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    /// Builds the tensor from a full matrix, averaging `m` with its transpose
    /// so that tiny asymmetries from upstream arithmetic cannot accumulate.
    pub fn from_matrix_symmetrized(m: &[[f64; 3]; 3]) -> Self {
        Self {
            xx: m[0][0],
            yy: m[1][1],
            zz: m[2][2],
            xy: 0.5 * (m[0][1] + m[1][0]),
            xz: 0.5 * (m[0][2] + m[2][0]),
            yz: 0.5 * (m[1][2] + m[2][1]),
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            xx: s * self.xx,
            yy: s * self.yy,
            zz: s * self.zz,
            xy: s * self.xy,
            xz: s * self.xz,
            yz: s * self.yz,
        }
    }

    /// Principal invariants `(tr A, (tr^2 A - tr A^2) / 2, det A)`.
    pub fn principal_invariants(&self) -> Invariants {
        let i1 = self.trace();
        let sq_trace = self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz);
        Invariants {
            i1,
            i2: 0.5 * (i1 * i1 - sq_trace),
            i3: self.det(),
        }
    }

    /// Eigenvalues in ascending order.
    ///
    /// Uses the trigonometric closed form for symmetric 3x3 matrices: with
    /// `q = tr/3` and `p` the scaled deviation from `q I`, the eigenvalues are
    /// `q + 2 p cos(phi + 2 pi k / 3)` where `3 phi` is the argument of
    /// `det((A - q I) / p) / 2`. Diagonal input short-circuits to the sorted
    /// diagonal so exact inputs give exact outputs.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let p1 = self.xy * self.xy + self.xz * self.xz + self.yz * self.yz;
        if p1 == 0.0 {
            let mut eig = [self.xx, self.yy, self.zz];
            eig.sort_by(f64::total_cmp);
            return eig;
        }
        let q = self.trace() / 3.0;
        let dx = self.xx - q;
        let dy = self.yy - q;
        let dz = self.zz - q;
        let p2 = dx * dx + dy * dy + dz * dz + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = Self {
            xx: dx / p,
            yy: dy / p,
            zz: dz / p,
            xy: self.xy / p,
            xz: self.xz / p,
            yz: self.yz / p,
        };
        let r = (b.det() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let mid = 3.0 * q - hi - lo;
        let mut eig = [lo, mid, hi];
        eig.sort_by(f64::total_cmp);
        eig
    }

    /// Conjugates the tensor by an orthogonal matrix: `r A r^T`, re-symmetrized
    /// by transpose averaging.
    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> Result<Self, TensorError> {
        check_orthogonal(r)?;
        let a = self.to_matrix();
        let mut ra = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                ra[i][j] = (0..3).map(|k| r[i][k] * a[k][j]).sum();
            }
        }
        let mut rart = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rart[i][j] = (0..3).map(|k| ra[i][k] * r[j][k]).sum();
            }
        }
        Ok(Self::from_matrix_symmetrized(&rart))
    }
}

/// Complex symmetric 3x3 tensor; the real and imaginary parts are each real
/// symmetric tensors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComplexTensor3 {
    pub xx: Complex64,
    pub yy: Complex64,
    pub zz: Complex64,
    pub xy: Complex64,
    pub xz: Complex64,
    pub yz: Complex64,
}

impl ComplexTensor3 {
    pub fn from_parts(re: RealTensor3, im: RealTensor3) -> Self {
        Self {
            xx: Complex64::new(re.xx, im.xx),
            yy: Complex64::new(re.yy, im.yy),
            zz: Complex64::new(re.zz, im.zz),
            xy: Complex64::new(re.xy, im.xy),
            xz: Complex64::new(re.xz, im.xz),
            yz: Complex64::new(re.yz, im.yz),
        }
    }

    pub fn real_part(&self) -> RealTensor3 {
        RealTensor3 {
            xx: self.xx.re,
            yy: self.yy.re,
            zz: self.zz.re,
            xy: self.xy.re,
            xz: self.xz.re,
            yz: self.yz.re,
        }
    }

    pub fn imag_part(&self) -> RealTensor3 {
        RealTensor3 {
            xx: self.xx.im,
            yy: self.yy.im,
            zz: self.zz.im,
            xy: self.xy.im,
            xz: self.xz.im,
            yz: self.yz.im,
        }
    }

    /// Isotropic tensor `m I`.
    pub fn isotropic(m: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self { xx: m, yy: m, zz: m, xy: zero, xz: zero, yz: zero }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            xx: s * self.xx,
            yy: s * self.yy,
            zz: s * self.zz,
            xy: s * self.xy,
            xz: s * self.xz,
            yz: s * self.yz,
        }
    }

    /// The six independent entries in file order
    /// `(xx, yy, zz, xy, xz, yz)`.
    pub fn entries(&self) -> [Complex64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_entries(e: [Complex64; 6]) -> Self {
        Self { xx: e[0], yy: e[1], zz: e[2], xy: e[3], xz: e[4], yz: e[5] }
    }

    /// Rotates real and imaginary parts by the same orthogonal matrix.
    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> Result<Self, TensorError> {
        Ok(Self::from_parts(self.real_part().rotate(r)?, self.imag_part().rotate(r)?))
    }
}

fn check_orthogonal(r: &[[f64; 3]; 3]) -> Result<(), TensorError> {
    let mut deviation: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((rtr - target).abs());
        }
    }
    if deviation > ORTHOGONALITY_TOL {
        Err(TensorError::NonOrthogonal { deviation })
    } else {
        Ok(())
    }
}

/// Uniformly distributed random rotation matrix, drawn via a normalized
/// quaternion. Used by tests and diagnostics that check rotation invariance.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        let [w, x, y, z] = q.map(|v| v / norm);
        return [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
    }
}
