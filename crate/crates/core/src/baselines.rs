//! Reference estimators: PCA plane fitting on triangulated points and the
//! cross product of central-difference tangents.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::field::{Field, NormalField, ScalarField};
use crate::geometry::{orient_toward_camera, triangulate, StereoRig};

/// Upper triangle of a symmetric 3x3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymmetricMatrix3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymmetricMatrix3 {
    pub fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        Self {
            xx,
            xy,
            xz,
            yy,
            yz,
            zz,
        }
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, 0.0, 0.0, b, 0.0, c)
    }

    pub fn mul_vec(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz) - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz))
            .sqrt()
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.xx * s,
            self.xy * s,
            self.xz * s,
            self.yy * s,
            self.yz * s,
            self.zz * s,
        )
    }

    fn max_abs(&self) -> f64 {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .iter()
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Centered covariance (sum of outer products, not normalized) of `points`.
    pub fn scatter(points: &[Vector3<f64>]) -> Self {
        let n = points.len() as f64;
        let mean = points.iter().sum::<Vector3<f64>>() / n;
        let mut m = Self::default();
        for p in points {
            let d = p - mean;
            m.xx += d.x * d.x;
            m.xy += d.x * d.y;
            m.xz += d.x * d.z;
            m.yy += d.y * d.y;
            m.yz += d.y * d.z;
            m.zz += d.z * d.z;
        }
        m
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen3 {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

/// Closed-form symmetric 3x3 eigendecomposition.
///
/// Eigenvalues come from the trigonometric solution of the characteristic
/// cubic. The eigenvector of the best separated eigenvalue is taken from the
/// largest cross product of rows of `A - lambda I`; the second one is solved
/// in its orthogonal complement and the third completes a right-handed basis.
/// The eigenvalues are then refined as Rayleigh quotients of those vectors,
/// which restores full precision near repeated roots.
pub fn eig3_symmetric(m: &SymmetricMatrix3) -> Eigen3 {
    let scale = m.max_abs();
    let identity = [Vector3::x(), Vector3::y(), Vector3::z()];
    if scale == 0.0 || !scale.is_finite() {
        return Eigen3 {
            values: [0.0; 3],
            vectors: identity,
        };
    }
    let a = m.scaled(1.0 / scale);

    let q = a.trace() / 3.0;
    let (b00, b11, b22) = (a.xx - q, a.yy - q, a.zz - q);
    let off = a.xy * a.xy + a.xz * a.xz + a.yz * a.yz;
    let p = ((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0).sqrt();
    if p <= f64::EPSILON {
        // Multiple of the identity.
        return Eigen3 {
            values: [q * scale; 3],
            vectors: identity,
        };
    }
    let b = SymmetricMatrix3::new(b00, a.xy, a.xz, b11, a.yz, b22).scaled(1.0 / p);
    let half_det = (0.5 * b.det()).clamp(-1.0, 1.0);
    let phi = half_det.acos() / 3.0;
    let beta2 = 2.0 * phi.cos();
    let beta0 = 2.0 * (phi + 2.0 * PI / 3.0).cos();
    let beta1 = -(beta0 + beta2);
    let values = [q + p * beta0, q + p * beta1, q + p * beta2];

    let vectors = if half_det >= 0.0 {
        let v2 = isolated_eigenvector(&a, values[2]);
        let v1 = eigenvector_in_complement(&a, &v2, values[1]);
        [v1.cross(&v2), v1, v2]
    } else {
        let v0 = isolated_eigenvector(&a, values[0]);
        let v1 = eigenvector_in_complement(&a, &v0, values[1]);
        [v0, v1, v0.cross(&v1)]
    };

    let mut pairs = vectors.map(|v| (v.dot(&a.mul_vec(&v)), v));
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Eigen3 {
        values: pairs.map(|(x, _)| x * scale),
        vectors: pairs.map(|(_, v)| v),
    }
}

fn isolated_eigenvector(a: &SymmetricMatrix3, lambda: f64) -> Vector3<f64> {
    let r0 = Vector3::new(a.xx - lambda, a.xy, a.xz);
    let r1 = Vector3::new(a.xy, a.yy - lambda, a.yz);
    let r2 = Vector3::new(a.xz, a.yz, a.zz - lambda);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vector3::zeros);
    let len = best.norm();
    if len > 0.0 {
        best / len
    } else {
        Vector3::x()
    }
}

fn orthonormal_complement(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        Vector3::new(-w.z, 0.0, w.x) / (w.x * w.x + w.z * w.z).sqrt()
    } else {
        Vector3::new(0.0, w.z, -w.y) / (w.y * w.y + w.z * w.z).sqrt()
    };
    (u, w.cross(&u))
}

fn eigenvector_in_complement(a: &SymmetricMatrix3, known: &Vector3<f64>, lambda: f64) -> Vector3<f64> {
    let (u, v) = orthonormal_complement(known);
    let au = a.mul_vec(&u);
    let av = a.mul_vec(&v);
    let mut m00 = u.dot(&au) - lambda;
    let mut m01 = u.dot(&av);
    let mut m11 = v.dot(&av) - lambda;
    let (abs00, abs01, abs11) = (m00.abs(), m01.abs(), m11.abs());
    if abs00 >= abs11 {
        if abs00.max(abs01) == 0.0 {
            return u;
        }
        if abs00 >= abs01 {
            m01 /= m00;
            m00 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m00;
        } else {
            m00 /= m01;
            m01 = 1.0 / (1.0 + m00 * m00).sqrt();
            m00 *= m01;
        }
        m01 * u - m00 * v
    } else {
        if abs11.max(abs01) == 0.0 {
            return u;
        }
        if abs11 >= abs01 {
            m01 /= m11;
            m11 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m11;
        } else {
            m11 /= m01;
            m01 = 1.0 / (1.0 + m11 * m11).sqrt();
            m11 *= m01;
        }
        m11 * u - m01 * v
    }
}

fn point_field(disparity: &ScalarField, rig: &StereoRig) -> Field<Vector3<f64>> {
    Field::par_from_fn(disparity.width(), disparity.height(), |u, v| {
        disparity
            .get(u, v)
            .and_then(|&d| triangulate(u as f64, v as f64, d, rig))
    })
}

/// PCA plane fit over a `window x window` neighbourhood.
///
/// Windows leaving the image are invalid. Masked samples inside the window
/// are skipped; at least three points and a non-collinear spread are needed.
pub fn estimate_normals_pca(disparity: &ScalarField, rig: &StereoRig, window: usize) -> Result<NormalField> {
    rig.validate()?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "PCA window must be odd and >= 3, got {window}"
        )));
    }
    let points = point_field(disparity, rig);
    let r = window / 2;
    let (w, h) = (disparity.width(), disparity.height());
    Ok(NormalField::par_from_fn_with(
        w,
        h,
        || Vec::with_capacity(window * window),
        |buf: &mut Vec<Vector3<f64>>, u, v| {
            if u < r || v < r || u + r >= w || v + r >= h {
                return None;
            }
            let center = *points.get(u, v)?;
            buf.clear();
            for y in v - r..=v + r {
                for x in u - r..=u + r {
                    if let Some(p) = points.get(x, y) {
                        buf.push(*p);
                    }
                }
            }
            if buf.len() < 3 {
                return None;
            }
            let eig = eig3_symmetric(&SymmetricMatrix3::scatter(buf));
            let [_, mid, top] = eig.values;
            if !(top > 0.0) || !(mid > 1e-12 * top) {
                return None;
            }
            orient_toward_camera(eig.vectors[0], &center)
        },
    ))
}

/// Normal from central-difference tangents of the triangulated point map.
pub fn estimate_normals_cross(disparity: &ScalarField, rig: &StereoRig) -> Result<NormalField> {
    rig.validate()?;
    let points = point_field(disparity, rig);
    let (w, h) = (disparity.width(), disparity.height());
    Ok(NormalField::par_from_fn(w, h, |u, v| {
        if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
            return None;
        }
        let center = points.get(u, v)?;
        let du = points.get(u + 1, v)? - points.get(u - 1, v)?;
        let dv = points.get(u, v + 1)? - points.get(u, v - 1)?;
        let n = du.cross(&dv);
        let len = n.norm();
        if !(len > 1e-12 * du.norm() * dv.norm()) {
            return None;
        }
        orient_toward_camera(n / len, center)
    }))
}
