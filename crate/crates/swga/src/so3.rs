//! Rotation-group primitives: the skew isomorphism, the exponential map,
//! ZYZ Euler angles, Haar sampling and geodesics.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthogonality tolerance accepted by [`Rotation::try_new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// A 3x3 orthogonal matrix with determinant 1.
///
/// The wrapper guarantees `|R^T R - I|_F <= 1e-9` and `det R = 1` within the
/// same tolerance; every constructor in this module preserves that invariant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix after checking the group invariants.
    pub fn try_new(m: Mat3) -> Result<Self> {
        let defect = orthogonality_defect(&m);
        let det = m.determinant();
        if defect > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::OutOfRange {
                what: format!("not a rotation: |R^T R - I|_F = {defect:.3e}, det = {det:.12}"),
            });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix that is known to be a rotation by construction.
    pub(crate) fn new_unchecked(m: Mat3) -> Self {
        debug_assert!(orthogonality_defect(&m) < 1e-7, "rotation invariant violated");
        Rotation(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `|R^T R - I|_F`, useful for drift monitoring along long trajectories.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Index<(usize, usize)> for Rotation {
    type Output = f64;
    fn index(&self, ij: (usize, usize)) -> &f64 {
        &self.0[ij]
    }
}

fn orthogonality_defect(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// ZYZ Euler angles with `alpha, gamma` in `[0, 2pi)` and `beta` in `[0, pi]`.
///
/// At `beta = 0` (resp. `pi`) only `alpha + gamma` (resp. `alpha - gamma`) is
/// determined; [`to_zyz`] resolves the ambiguity with `gamma = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerZyz {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZyz {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        EulerZyz { alpha, beta, gamma }
    }
}

/// The skew matrix `S(a)` with `S(a) b = a x b`.
pub fn skew(a: Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of [`skew`]; rejects matrices with `|S + S^T|_F > 1e-9`.
pub fn unskew(s: &Mat3) -> Result<Vec3> {
    let defect = (s + s.transpose()).norm();
    if defect > 1e-9 {
        return Err(Error::NotAntisymmetric { defect });
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// Matrix exponential of `S(a)` in closed Rodrigues form.
///
/// Falls back to the Taylor expansion of `sin(t)/t` and `(1-cos t)/t^2` for
/// `|a| < 1e-4` to avoid cancellation.
pub fn exp_so3(a: Vec3) -> Rotation {
    let theta2 = a.norm_squared();
    let s = skew(a);
    let (c1, c2) = if theta2 < 1e-8 {
        // sin(t)/t and (1 - cos t)/t^2 truncated at O(t^6)
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        let theta = theta2.sqrt();
        ((theta.sin()) / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation::new_unchecked(Mat3::identity() + s * c1 + s * s * c2)
}

/// `R(alpha, beta, gamma) = exp(alpha S(e3)) exp(beta S(e2)) exp(gamma S(e3))`.
pub fn from_zyz(angles: EulerZyz) -> Rotation {
    let rz_a = exp_so3(Vec3::new(0.0, 0.0, angles.alpha));
    let ry_b = exp_so3(Vec3::new(0.0, angles.beta, 0.0));
    let rz_g = exp_so3(Vec3::new(0.0, 0.0, angles.gamma));
    rz_a * ry_b * rz_g
}

/// Extracts ZYZ angles; `beta = arccos(R33)` with the cosine clamped to
/// `[-1, 1]`, and `gamma = 0` at the gimbal degeneracy.
pub fn to_zyz(r: &Rotation) -> EulerZyz {
    let m = r.matrix();
    let c = m[(2, 2)].clamp(-1.0, 1.0);
    let beta = c.acos();
    let sb = (1.0 - c * c).sqrt();
    if sb > 1e-9 {
        let alpha = m[(1, 2)].atan2(m[(0, 2)]).rem_euclid(TAU);
        let gamma = m[(2, 1)].atan2(-m[(2, 0)]).rem_euclid(TAU);
        EulerZyz::new(alpha, beta, gamma)
    } else if c > 0.0 {
        // R = Z(alpha + gamma)
        let alpha = m[(1, 0)].atan2(m[(0, 0)]).rem_euclid(TAU);
        EulerZyz::new(alpha, 0.0, 0.0)
    } else {
        // R = Z(alpha - gamma) Y(pi)
        let alpha = (-m[(1, 0)]).atan2(-m[(0, 0)]).rem_euclid(TAU);
        EulerZyz::new(alpha, PI, 0.0)
    }
}

/// Draws a Haar-uniform rotation from a uniformly random unit quaternion.
pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    // A normalized 4-dimensional Gaussian is uniform on S^3.
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n2 = q.iter().map(|x| x * x).sum::<f64>();
        if n2 < 1e-12 {
            continue;
        }
        let n = n2.sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let m = Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return Rotation::new_unchecked(m);
    }
}

/// One step along the geodesic: `R exp(t S(a))`.
pub fn geodesic_step(r: &Rotation, a: Vec3, t: f64) -> Rotation {
    *r * exp_so3(a * t)
}
