//! Rectified pin-hole stereo model.
//!
//! Left camera at the origin looking down +z, right camera translated by
//! `baseline` along +x. Pixel `(u, v)` is column/row with the origin at the
//! center of the top-left pixel. Disparities are left-referenced and
//! non-negative: `d = u_left - u_right = fx * b / z`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NormalField, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(fx: f64, fy: f64, u0: f64, v0: f64, baseline: f64) -> Result<Self> {
        let rig = Self {
            fx,
            fy,
            u0,
            v0,
            baseline,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Square pixels, principal point at the image center.
    pub fn centered(focal: f64, baseline: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            baseline,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.fx) || !ok(self.fy) || !ok(self.baseline) {
            return Err(Error::InvalidArgument(format!(
                "rig requires fx, fy, baseline > 0 (got fx={}, fy={}, b={})",
                self.fx, self.fy, self.baseline
            )));
        }
        if !self.u0.is_finite() || !self.v0.is_finite() {
            return Err(Error::InvalidArgument("principal point must be finite".into()));
        }
        Ok(())
    }

    /// `fx * b`, the disparity-depth product.
    #[inline]
    pub fn focal_baseline(&self) -> f64 {
        self.fx * self.baseline
    }

    /// Left-image projection.
    pub fn project_left(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            (self.fx * p.x + self.u0 * p.z) / p.z,
            (self.fy * p.y + self.v0 * p.z) / p.z,
        )
    }

    /// Right-image projection.
    pub fn project_right(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            (self.fx * (p.x - self.baseline) + self.u0 * p.z) / p.z,
            (self.fy * p.y + self.v0 * p.z) / p.z,
        )
    }

    /// Left-camera viewing direction through `(u, v)`, scaled to unit depth.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.u0) / self.fx, (v - self.v0) / self.fy, 1.0)
    }
}

/// Depth from disparity. `None` for non-positive or non-finite disparity.
#[inline]
pub fn disparity_to_depth(d: f64, rig: &StereoRig) -> Option<f64> {
    (d.is_finite() && d > 0.0).then(|| rig.focal_baseline() / d)
}

#[inline]
pub fn depth_to_disparity(z: f64, rig: &StereoRig) -> Option<f64> {
    (z.is_finite() && z > 0.0).then(|| rig.focal_baseline() / z)
}

/// Back-projects a left-image pixel with known disparity.
#[inline]
pub fn triangulate(u: f64, v: f64, d: f64, rig: &StereoRig) -> Option<Vector3<f64>> {
    let z = disparity_to_depth(d, rig)?;
    Some(Vector3::new(
        (u - rig.u0) * z / rig.fx,
        (v - rig.v0) * z / rig.fy,
        z,
    ))
}

/// Per-pixel depth map; pixels with unusable disparity become invalid.
pub fn depth_field(disparity: &ScalarField, rig: &StereoRig) -> ScalarField {
    ScalarField::from_fn(disparity.width(), disparity.height(), |u, v| {
        disparity
            .get(u, v)
            .and_then(|&d| disparity_to_depth(d, rig))
    })
}

/// Flips `n` so that it points toward the camera (`n . X <= 0`).
///
/// Returns `None` for a zero or non-finite vector.
#[inline]
pub fn orient_toward_camera(n: Vector3<f64>, point: &Vector3<f64>) -> Option<Vector3<f64>> {
    if !n.iter().all(|c| c.is_finite()) || n.norm_squared() == 0.0 {
        return None;
    }
    if n.dot(point) > 0.0 {
        Some(-n)
    } else {
        Some(n)
    }
}

/// Surface normal from the rectified affine parameters at triangulated point `point`.
///
/// The normal is orthogonal to both `a1*X - (x-b, y, z)` and
/// `a2*fy*X - (0, -b*fx, 0)`; their cross product is normalized and turned
/// toward the camera. `None` when the two constraint vectors are parallel.
pub fn normal_from_affine(a1: f64, a2: f64, point: &Vector3<f64>, rig: &StereoRig) -> Option<Vector3<f64>> {
    if !(point.z > 0.0) || !a1.is_finite() || !a2.is_finite() {
        return None;
    }
    let b = rig.baseline;
    let first = a1 * point - Vector3::new(point.x - b, point.y, point.z);
    let second = a2 * rig.fy * point - Vector3::new(0.0, -b * rig.fx, 0.0);
    let n = first.cross(&second);
    let len = n.norm();
    if !(len > 1e-12 * first.norm() * second.norm()) {
        return None;
    }
    orient_toward_camera(n / len, point)
}

/// Forward model: affine parameters induced by a plane with normal `n` through `point`.
pub fn affine_from_normal(n: &Vector3<f64>, point: &Vector3<f64>, rig: &StereoRig) -> Result<(f64, f64)> {
    let dot = n.dot(point);
    if !(dot.abs() > 1e-12 * n.norm() * point.norm()) {
        return Err(Error::DegeneratePlane { dot });
    }
    let b = rig.baseline;
    let a1 = (n.x * (point.x - b) + n.y * point.y + n.z * point.z) / dot;
    let a2 = -b * rig.fx * n.y / (rig.fy * dot);
    Ok((a1, a2))
}

/// Angle between two directions ignoring sign, in degrees.
///
/// Equals `acos(|a.b| / (|a||b|))`; evaluated as `atan2(|a x b|, |a.b|)` so
/// that tiny angles keep full precision.
pub fn unsigned_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs()).to_degrees()
}

/// Orients every valid normal toward its triangulated point.
pub fn orient_field(normals: &mut NormalField, disparity: &ScalarField, rig: &StereoRig) {
    for v in 0..normals.height() {
        for u in 0..normals.width() {
            let Some(&n) = normals.get(u, v) else { continue };
            let p = disparity
                .get(u, v)
                .and_then(|&d| triangulate(u as f64, v as f64, d, rig));
            match p.and_then(|p| orient_toward_camera(n, &p)) {
                Some(n) => normals.set(u, v, n),
                None => normals.invalidate(u, v),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rig() -> StereoRig {
        StereoRig::new(1000.0, 1000.0, 320.0, 240.0, 0.5).unwrap()
    }

    #[test]
    fn depth_from_disparity() {
        assert_eq!(disparity_to_depth(100.0, &rig()), Some(5.0));
        assert_eq!(disparity_to_depth(0.0, &rig()), None);
        assert_eq!(disparity_to_depth(-1.0, &rig()), None);
        assert_eq!(disparity_to_depth(f64::NAN, &rig()), None);
    }

    #[test]
    fn depth_roundtrip_within_one_ulp() {
        for z in [0.1_f64, 3.0, 15.5] {
            let d = depth_to_disparity(z, &rig()).unwrap();
            let back = disparity_to_depth(d, &rig()).unwrap();
            let ulp = f64::EPSILON * z;
            assert!((back - z).abs() <= ulp, "{z} -> {back}");
        }
    }

    #[test]
    fn rig_rejects_bad_parameters() {
        assert!(StereoRig::new(0.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(StereoRig::new(1.0, -1.0, 0.0, 0.0, 1.0).is_err());
        assert!(StereoRig::new(1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn triangulate_principal_ray() {
        let r = rig();
        let p = triangulate(r.u0, r.v0, 37.0, &r).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_relative_eq!(p.z, 500.0 / 37.0);
    }

    #[test]
    fn triangulate_reprojects_to_both_images() {
        let r = rig();
        let p = triangulate(r.u0 + 100.0, r.v0, 100.0, &r).unwrap();
        assert_relative_eq!(p, Vector3::new(0.5, 0.0, 5.0), epsilon = 1e-12);
        let (ul, vl) = r.project_left(&p);
        let (ur, vr) = r.project_right(&p);
        assert_relative_eq!(ul, r.u0 + 100.0, epsilon = 1e-9);
        assert_relative_eq!(vl, r.v0, epsilon = 1e-9);
        assert_relative_eq!(ur, r.u0, epsilon = 1e-9);
        assert_relative_eq!(vr, r.v0, epsilon = 1e-9);
        assert!(triangulate(1.0, 1.0, 0.0, &r).is_none());
    }

    #[test]
    fn fronto_parallel_normal() {
        let r = rig();
        for p in [Vector3::new(0.0, 0.0, 5.0), Vector3::new(-3.0, 2.0, 1.0)] {
            let n = normal_from_affine(1.0, 0.0, &p, &r).unwrap();
            assert_relative_eq!(n, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn affine_from_normal_examples() {
        let r = rig();
        let (a1, a2) = affine_from_normal(&Vector3::new(0.0, 0.0, -1.0), &Vector3::new(1.0, 2.0, 7.0), &r).unwrap();
        assert_eq!((a1, a2), (1.0, 0.0));
        let (a1, a2) = affine_from_normal(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(2.0, 0.0, 5.0), &r).unwrap();
        assert_relative_eq!(a1, 0.75);
        assert_eq!(a2, 0.0);
        let (a1, a2) = affine_from_normal(&Vector3::new(0.0, 1.0, 0.0), &Vector3::new(0.0, 2.0, 5.0), &r).unwrap();
        assert_relative_eq!(a1, 1.0);
        assert_relative_eq!(a2, -0.25);
    }

    #[test]
    fn affine_from_normal_rejects_plane_through_center() {
        let r = rig();
        let err = affine_from_normal(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(0.0, 1.0, 5.0), &r);
        assert!(matches!(err, Err(Error::DegeneratePlane { .. })));
    }

    #[test]
    fn axis_normal_roundtrips() {
        let r = rig();
        let cases = [
            (Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 5.0)),
            (Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 2.0, 5.0)),
        ];
        for (n, x) in cases {
            let (a1, a2) = affine_from_normal(&n, &x, &r).unwrap();
            let est = normal_from_affine(a1, a2, &x, &r).unwrap();
            assert!(unsigned_angle_deg(&est, &n) < 1e-6 * 180.0 / std::f64::consts::PI);
            assert!(est.dot(&x) <= 0.0);
        }
    }

    #[test]
    fn orientation_convention() {
        let x = Vector3::new(0.0, 0.0, 5.0);
        assert_eq!(orient_toward_camera(Vector3::new(0.0, 0.0, 1.0), &x), Some(Vector3::new(0.0, 0.0, -1.0)));
        assert_eq!(orient_toward_camera(Vector3::new(0.0, 0.0, -1.0), &x), Some(Vector3::new(0.0, 0.0, -1.0)));
        let n = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(orient_toward_camera(n, &x), Some(n));
        assert_eq!(orient_toward_camera(Vector3::zeros(), &x), None);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        // For z > 0 the two constraint vectors are never parallel, so only
        // non-finite parameters or points behind the camera are refused.
        let r = rig();
        let p = Vector3::new(2.0, 0.0, 5.0);
        assert!(normal_from_affine(f64::NAN, 0.0, &p, &r).is_none());
        assert!(normal_from_affine(1.0, f64::INFINITY, &p, &r).is_none());
        assert!(normal_from_affine(1.0, 0.0, &Vector3::new(0.0, 0.0, -1.0), &r).is_none());
    }

    fn unit() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn reprojection_closure(u in 0.0f64..1280.0, v in 0.0f64..960.0, d in 0.5f64..400.0) {
            let r = rig();
            let p = triangulate(u, v, d, &r).unwrap();
            let (pu, pv) = r.project_left(&p);
            let (ru, rv) = r.project_right(&p);
            prop_assert!((pu - u).abs() <= 1e-9 * u.abs().max(1.0));
            prop_assert!((pv - v).abs() <= 1e-9 * v.abs().max(1.0));
            prop_assert!((ru - (u - d)).abs() <= 1e-9 * u.abs().max(1.0));
            prop_assert!((rv - v).abs() <= 1e-9 * v.abs().max(1.0));
        }

        #[test]
        fn affine_scale_invariant(n in unit(), x in -3.0f64..3.0, y in -3.0f64..3.0, z in 0.5f64..20.0, c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
            let p = Vector3::new(x, y, z);
            prop_assume!(n.dot(&p).abs() > 1e-3 * p.norm());
            let (a1, a2) = affine_from_normal(&n, &p, &rig()).unwrap();
            let (b1, b2) = affine_from_normal(&(c * n), &p, &rig()).unwrap();
            prop_assert!((a1 - b1).abs() <= 1e-12 * a1.abs().max(1.0));
            prop_assert!((a2 - b2).abs() <= 1e-12 * a2.abs().max(1.0));
        }

        #[test]
        fn normal_is_unit_and_facing(a1 in 0.0f64..2.0, a2 in -1.0f64..1.0, x in -3.0f64..3.0, y in -3.0f64..3.0, z in 0.5f64..20.0) {
            let p = Vector3::new(x, y, z);
            if let Some(n) = normal_from_affine(a1, a2, &p, &rig()) {
                prop_assert!((n.norm() - 1.0).abs() < 1e-12);
                prop_assert!(n.dot(&p) <= 0.0);
            }
        }
    }
}
