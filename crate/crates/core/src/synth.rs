//! Raycast ground truth for analytic scenes and seeded disparity noise.
//!
//! Scenes are described in the left camera frame (x right, y down, z forward).
//! Each pixel casts one ray through its center; the nearest positive hit gives
//! depth, disparity (`fx * b / z`) and the analytic surface normal.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NormalField, ScalarField};
use crate::geometry::{orient_toward_camera, StereoRig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box given by opposite corners.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Points `X` with `normal . X = offset`.
    Plane { normal: [f64; 3], offset: f64 },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        match self {
            Primitive::Sphere { radius, .. } if !(*radius > 0.0) => {
                Err(Error::Scene(format!("sphere radius must be positive, got {radius}")))
            }
            Primitive::Box { min, max } if (0..3).any(|i| !(min[i] < max[i])) => {
                Err(Error::Scene(format!("box min {min:?} must be below max {max:?}")))
            }
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                if !(n.norm() > 0.0) || !offset.is_finite() {
                    return Err(Error::Scene("plane needs a non-zero normal and finite offset".into()));
                }
                if *offset == 0.0 {
                    return Err(Error::Scene("plane passes through the camera center".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Nearest positive ray parameter and outward normal. The ray starts at
    /// the origin; `t` scales `dir`.
    fn intersect(&self, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Primitive::Sphere { center, radius } => {
                let c = Vector3::from(*center);
                let a = dir.norm_squared();
                let half_b = -dir.dot(&c);
                let cc = c.norm_squared() - radius * radius;
                let disc = half_b * half_b - a * cc;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                // Stable pair of roots of a t^2 + 2 half_b t + cc.
                let q = -(half_b + half_b.signum() * root);
                let (mut t0, mut t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, cc / q) };
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                let t = if t0 > 0.0 {
                    t0
                } else if t1 > 0.0 {
                    t1
                } else {
                    return None;
                };
                Some((t, (t * dir - c) / *radius))
            }
            Primitive::Box { min, max } => {
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut near_axis, mut far_axis) = (0, 0);
                for i in 0..3 {
                    if dir[i] == 0.0 {
                        if 0.0 < min[i] || 0.0 > max[i] {
                            return None;
                        }
                        continue;
                    }
                    let mut ta = min[i] / dir[i];
                    let mut tb = max[i] / dir[i];
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    if ta > t_near {
                        t_near = ta;
                        near_axis = i;
                    }
                    if tb < t_far {
                        t_far = tb;
                        far_axis = i;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (t, axis) = if t_near > 0.0 {
                    (t_near, near_axis)
                } else if t_far > 0.0 {
                    (t_far, far_axis)
                } else {
                    return None;
                };
                let mut n = Vector3::zeros();
                n[axis] = -dir[axis].signum();
                Some((t, n))
            }
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal).normalize();
                let off = offset / Vector3::from(*normal).norm();
                let denom = n.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                let t = off / denom;
                (t > 0.0 && t.is_finite()).then_some((t, n))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub rig: StereoRig,
    #[serde(default, rename = "primitive")]
    pub primitives: Vec<Primitive>,
}

/// On-disk form: the principal point may be omitted (defaults to the image center).
#[derive(Deserialize)]
struct SceneFile {
    width: usize,
    height: usize,
    rig: RigFile,
    #[serde(default)]
    primitive: Vec<Primitive>,
}

#[derive(Deserialize)]
struct RigFile {
    fx: f64,
    fy: Option<f64>,
    u0: Option<f64>,
    v0: Option<f64>,
    baseline: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Scene("resolution must be positive".into()));
        }
        self.rig.validate()?;
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Parses the TOML scene format (see `scenes/` for examples).
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        let rig = StereoRig::new(
            file.rig.fx,
            file.rig.fy.unwrap_or(file.rig.fx),
            file.rig.u0.unwrap_or((file.width as f64 - 1.0) / 2.0),
            file.rig.v0.unwrap_or((file.height as f64 - 1.0) / 2.0),
            file.rig.baseline,
        )?;
        let spec = Self {
            width: file.width,
            height: file.height,
            rig,
            primitives: file.primitive,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Sphere of radius 1.4 three units in front of the camera, 1024x1024,
    /// baseline 0.3, focal length 1024 px.
    pub fn sphere_benchmark() -> Self {
        let (w, h) = (1024, 1024);
        Self {
            width: w,
            height: h,
            rig: StereoRig::centered(1024.0, 0.3, w, h).expect("valid rig"),
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 3.0],
                radius: 1.4,
            }],
        }
    }

    /// Several boxes and a sphere standing on a floor slab, 1024x720, baseline
    /// 0.3. The furthest box is 4x3x4 with its center 15.5 units away.
    pub fn boxes_benchmark() -> Self {
        let (w, h) = (1024, 720);
        let boxed = |min: [f64; 3], max: [f64; 3]| Primitive::Box { min, max };
        Self {
            width: w,
            height: h,
            rig: StereoRig::centered(1024.0, 0.3, w, h).expect("valid rig"),
            primitives: vec![
                // floor, top face at y = 2
                boxed([-14.0, 2.0, 3.0], [14.0, 2.5, 26.0]),
                // furthest box
                boxed([-2.0, -1.0, 13.5], [2.0, 2.0, 17.5]),
                boxed([-5.5, 0.0, 8.0], [-3.0, 2.0, 10.5]),
                boxed([2.2, 0.6, 6.0], [3.8, 2.0, 7.6]),
                boxed([3.5, -0.5, 11.0], [6.5, 2.0, 13.0]),
                boxed([-1.2, 1.2, 5.0], [0.0, 2.0, 5.8]),
                Primitive::Sphere {
                    center: [1.0, 1.2, 9.0],
                    radius: 0.8,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub depth: ScalarField,
    pub disparity: ScalarField,
    pub normals: NormalField,
}

impl GroundTruth {
    /// Hit/miss mask shared by all channels.
    pub fn mask(&self) -> &[bool] {
        self.depth.mask()
    }
}

fn from_hits(width: usize, height: usize, rig: &StereoRig, hit: impl Fn(&Vector3<f64>) -> Option<(f64, Vector3<f64>)> + Sync) -> GroundTruth {
    let hits = crate::field::Field::<(f64, Vector3<f64>)>::par_from_fn(width, height, |u, v| {
        let dir = rig.ray(u as f64, v as f64);
        let (t, n) = hit(&dir)?;
        let n = orient_toward_camera(n, &(t * dir))?;
        Some((t, n))
    });
    let depth = hits.map(|&(t, _)| t);
    let disparity = hits.map(|&(t, _)| rig.focal_baseline() / t);
    let normals = hits.map(|&(_, n)| n);
    GroundTruth {
        depth,
        disparity,
        normals,
    }
}

pub fn raycast(scene: &SceneSpec) -> Result<GroundTruth> {
    scene.validate()?;
    Ok(from_hits(scene.width, scene.height, &scene.rig, |dir| {
        scene
            .primitives
            .iter()
            .filter_map(|p| p.intersect(dir))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }))
}

/// Ground truth for a single plane `normal . X = offset` covering every pixel.
pub fn make_plane_scene(normal: &Vector3<f64>, offset: f64, rig: &StereoRig, width: usize, height: usize) -> Result<GroundTruth> {
    rig.validate()?;
    let len = normal.norm();
    if !(len > 0.0) || !offset.is_finite() || offset == 0.0 {
        return Err(Error::InvalidArgument(
            "plane needs a non-zero normal and must not pass through the camera".into(),
        ));
    }
    let n = normal / len;
    let off = offset / len;
    for v in 0..height {
        for u in 0..width {
            let dir = rig.ray(u as f64, v as f64);
            let t = off / n.dot(&dir);
            if !(t > 0.0 && t.is_finite()) || n.dot(&dir).abs() < 1e-9 * dir.norm() {
                return Err(Error::InvalidArgument(format!(
                    "plane is not visible in front of the camera at pixel ({u}, {v})"
                )));
            }
        }
    }
    let plane = Primitive::Plane {
        normal: n.into(),
        offset: off,
    };
    Ok(from_hits(width, height, rig, |dir| plane.intersect(dir)))
}

/// Adds i.i.d. `N(0, sigma)` noise to every valid pixel, drawn in raster order
/// from a ChaCha8 stream seeded with `seed`.
pub fn add_gaussian_noise(field: &ScalarField, sigma: f64, seed: u64) -> Result<ScalarField> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be finite and non-negative, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(field.map(|&x| {
        let z: f64 = rng.sample(StandardNormal);
        x + sigma * z
    }))
}
