//! Star-shaped adaptive supports.
//!
//! From each observed pixel, `directions` rays are walked outward for at most
//! `max_steps` pixels. A ray stops before the first pixel that is out of
//! bounds, invalid, or that trips the stopping rule:
//!
//! * [`StopRule::Threshold`]: the precomputed depth-Laplacian magnitude at the
//!   pixel exceeds `t`.
//! * [`StopRule::CoveredDepth`]: the spread `max - min` of depths seen so far
//!   (center included) would exceed `k * z_center`.
//!
//! The union of visited pixels is then fed to the same least-squares model as
//! the fixed kernels, with the moments accumulated on the fly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AffineField, NormalField, ScalarField};
use crate::geometry::{depth_field, StereoRig};
use crate::kernel::{normals_from_affine_field, Moments, Offset};

/// Per-pixel discontinuity magnitudes in world depth units.
pub type EdgeMap = ScalarField;

/// Whether covered-depth bookkeeping restarts on every ray.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthScope {
    #[default]
    PerRay,
    PerPixel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop at pixels whose edge measure exceeds the threshold.
    Threshold { t: f64 },
    /// Stop once the covered depth range exceeds `k` times the center depth.
    CoveredDepth { k: f64, scope: DepthScope },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarConfig {
    pub directions: usize,
    pub max_steps: usize,
    pub stop: StopRule,
}

impl StarConfig {
    pub fn threshold(directions: usize, max_steps: usize, t: f64) -> Result<Self> {
        let c = Self {
            directions,
            max_steps,
            stop: StopRule::Threshold { t },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn covered_depth(directions: usize, max_steps: usize, k: f64) -> Result<Self> {
        let c = Self {
            directions,
            max_steps,
            stop: StopRule::CoveredDepth {
                k,
                scope: DepthScope::PerRay,
            },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions < 3 {
            return Err(Error::InvalidArgument(format!(
                "star fill needs at least 3 directions, got {}",
                self.directions
            )));
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        let limit = match self.stop {
            StopRule::Threshold { t } => t,
            StopRule::CoveredDepth { k, .. } => k,
        };
        if !(limit > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stopping threshold must be positive, got {limit}"
            )));
        }
        Ok(())
    }

    pub fn needs_edges(&self) -> bool {
        matches!(self.stop, StopRule::Threshold { .. })
    }

    /// Unit direction of ray `j`; ray 0 points along +u.
    pub fn direction(&self, j: usize) -> (f64, f64) {
        let theta = 2.0 * PI * j as f64 / self.directions as f64;
        (theta.cos(), theta.sin())
    }
}

/// Absolute 5-point Laplacian of the depth map. Pixels on the image border or
/// next to an invalid pixel are invalid.
pub fn depth_laplacian(depth: &ScalarField) -> EdgeMap {
    let (w, h) = (depth.width(), depth.height());
    ScalarField::par_from_fn(w, h, |u, v| {
        if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
            return None;
        }
        let z = *depth.get(u, v)?;
        let l = *depth.get(u - 1, v)?;
        let r = *depth.get(u + 1, v)?;
        let t = *depth.get(u, v - 1)?;
        let b = *depth.get(u, v + 1)?;
        Some((4.0 * z - l - r - t - b).abs())
    })
}

/// Star traversal over a depth map with an optional precomputed edge map.
pub struct StarTracer<'a> {
    depth: &'a ScalarField,
    edges: Option<&'a EdgeMap>,
    config: StarConfig,
    rays: Vec<(f64, f64)>,
}

impl<'a> StarTracer<'a> {
    pub fn new(depth: &'a ScalarField, edges: Option<&'a EdgeMap>, config: StarConfig) -> Result<Self> {
        config.validate()?;
        if config.needs_edges() {
            match edges {
                None => {
                    return Err(Error::InvalidArgument(
                        "threshold stopping requires an edge map".into(),
                    ))
                }
                Some(e) => depth.same_shape(e)?,
            }
        }
        let rays = (0..config.directions).map(|j| config.direction(j)).collect();
        Ok(Self {
            depth,
            edges,
            config,
            rays,
        })
    }

    /// Collects the selected offsets around `(u, v)` into `out` (cleared first).
    /// The center `(0, 0)` is always first; nothing is selected for an invalid center.
    pub fn trace(&self, u: usize, v: usize, out: &mut Vec<Offset>) {
        out.clear();
        let Some(&zc) = self.depth.get(u, v) else { return };
        out.push((0, 0));
        let (cu, cv) = (u as f64, v as f64);
        let (mut lo, mut hi) = (zc, zc);

        for &(cx, cy) in &self.rays {
            if let StopRule::CoveredDepth {
                scope: DepthScope::PerRay,
                ..
            } = self.config.stop
            {
                lo = zc;
                hi = zc;
            }
            let mut prev = (0i64, 0i64);
            for i in 1..=self.config.max_steps {
                let step = i as f64;
                let pu = (cu + step * cx).round() as i64;
                let pv = (cv + step * cy).round() as i64;
                let off = (pu - u as i64, pv - v as i64);
                if off == prev {
                    continue;
                }
                prev = off;
                let Some(&z) = self.depth.get_signed(pu, pv) else { break };
                match self.config.stop {
                    StopRule::Threshold { t } => {
                        let edge = self
                            .edges
                            .and_then(|e| e.get(pu as usize, pv as usize).copied());
                        // Pixels without an edge measure sit next to a hole or the border.
                        match edge {
                            Some(e) if e <= t => {}
                            _ => break,
                        }
                    }
                    StopRule::CoveredDepth { k, .. } => {
                        let (nlo, nhi) = (lo.min(z), hi.max(z));
                        if nhi - nlo > k * zc {
                            break;
                        }
                        lo = nlo;
                        hi = nhi;
                    }
                }
                let off = (off.0 as i32, off.1 as i32);
                if !out.contains(&off) {
                    out.push(off);
                }
            }
        }
    }
}

/// Offsets selected around `(u, v)`.
pub fn star_trace(u: usize, v: usize, depth: &ScalarField, edges: Option<&EdgeMap>, config: &StarConfig) -> Result<Vec<Offset>> {
    let tracer = StarTracer::new(depth, edges, *config)?;
    let mut out = Vec::new();
    tracer.trace(u, v, &mut out);
    Ok(out)
}

/// Two-pass estimate over a given support: moments first, then the weighted
/// disparity differences.
pub fn affine_over_support(disparity: &ScalarField, u: usize, v: usize, support: &[Offset]) -> Option<(f64, f64)> {
    let &dc = disparity.get(u, v)?;
    let mut m = Moments::default();
    for &(dx, dy) in support {
        m.add(dx as f64, dy as f64);
    }
    if m.is_singular() {
        return None;
    }
    let (mut gx, mut gy) = (0.0, 0.0);
    for &(dx, dy) in support {
        let &d = disparity.get_signed(u as i64 + dx as i64, v as i64 + dy as i64)?;
        let (s1, s2) = m.weights(dx as f64, dy as f64);
        gx += s1 * (d - dc);
        gy += s2 * (d - dc);
    }
    Some((1.0 - gx, -gy))
}

pub fn estimate_affine_adaptive(
    disparity: &ScalarField,
    depth: &ScalarField,
    edges: Option<&EdgeMap>,
    u: usize,
    v: usize,
    config: &StarConfig,
) -> Result<Option<(f64, f64)>> {
    let support = star_trace(u, v, depth, edges, config)?;
    Ok(affine_over_support(disparity, u, v, &support))
}

/// Affine field using star supports at every pixel.
pub fn adaptive_affine_field(disparity: &ScalarField, depth: &ScalarField, edges: Option<&EdgeMap>, config: &StarConfig) -> Result<AffineField> {
    disparity.same_shape(depth)?;
    let tracer = StarTracer::new(depth, edges, *config)?;
    let cap = config.directions * config.max_steps + 1;
    Ok(AffineField::par_from_fn_with(
        disparity.width(),
        disparity.height(),
        || Vec::with_capacity(cap),
        |scratch, u, v| {
            tracer.trace(u, v, scratch);
            affine_over_support(disparity, u, v, scratch).map(|(a1, a2)| [a1, a2])
        },
    ))
}

/// Dense normals with adaptive supports; depth and (for thresholding) edges
/// are derived from the disparity map.
pub fn estimate_normals_adaptive(disparity: &ScalarField, rig: &StereoRig, config: &StarConfig) -> Result<NormalField> {
    rig.validate()?;
    config.validate()?;
    let depth = depth_field(disparity, rig);
    let edges = config.needs_edges().then(|| depth_laplacian(&depth));
    let affine = adaptive_affine_field(disparity, &depth, edges.as_ref(), config)?;
    Ok(normals_from_affine_field(&affine, disparity, rig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{estimate_affine_direct, KernelSpec};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn field(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ScalarField {
        ScalarField::from_fn(w, h, |u, v| Some(f(u, v)))
    }

    #[test]
    fn config_validation() {
        assert!(StarConfig::threshold(2, 5, 0.1).is_err());
        assert!(StarConfig::threshold(8, 0, 0.1).is_err());
        assert!(StarConfig::threshold(8, 5, 0.0).is_err());
        assert!(StarConfig::covered_depth(8, 5, -1.0).is_err());
        assert!(StarConfig::covered_depth(3, 1, 0.1).is_ok());
    }

    #[test]
    fn laplacian_of_ramp_is_zero() {
        let z = field(6, 5, |u, v| 2.0 + 0.5 * u as f64 - 0.25 * v as f64);
        let e = depth_laplacian(&z);
        for v in 1..4 {
            for u in 1..5 {
                assert!(e.get(u, v).unwrap().abs() < 1e-12);
            }
        }
        for u in 0..6 {
            assert!(e.get(u, 0).is_none());
            assert!(e.get(u, 4).is_none());
        }
        assert!(e.get(0, 2).is_none());
        assert!(e.get(5, 2).is_none());
    }

    #[test]
    fn laplacian_of_step() {
        let z = field(8, 5, |u, _| if u < 4 { 5.0 } else { 7.0 });
        let e = depth_laplacian(&z);
        // 4*5 - 5 - 7 - 5 - 5 = -2 on the left, 4*7 - 5 - 7 - 7 - 7 = 2 on the right.
        assert_eq!(e.get(3, 2), Some(&2.0));
        assert_eq!(e.get(4, 2), Some(&2.0));
        assert_eq!(e.get(2, 2), Some(&0.0));
        assert_eq!(e.get(5, 2), Some(&0.0));
    }

    #[test]
    fn laplacian_next_to_hole_is_invalid() {
        let mut z = field(5, 5, |_, _| 1.0);
        z.invalidate(2, 2);
        let e = depth_laplacian(&z);
        assert!(e.get(1, 2).is_none());
        assert!(e.get(2, 1).is_none());
        assert!(e.get(1, 1).is_some());
    }

    /// Independent enumeration of the rounded rays.
    fn enumerate_rays(m: usize, s: usize) -> BTreeSet<Offset> {
        let mut set = BTreeSet::new();
        set.insert((0, 0));
        for j in 0..m {
            let a = 2.0 * PI * (j as f64) / (m as f64);
            for i in 1..=s {
                let x = (i as f64 * a.cos()).round() as i32;
                let y = (i as f64 * a.sin()).round() as i32;
                set.insert((x, y));
            }
        }
        set
    }

    #[test]
    fn unobstructed_star_matches_enumeration() {
        let z = field(41, 41, |_, _| 5.0);
        let cfg = StarConfig::covered_depth(8, 10, 0.1).unwrap();
        let got = star_trace(20, 20, &z, None, &cfg).unwrap();
        let got_set: BTreeSet<Offset> = got.iter().copied().collect();
        assert_eq!(got.len(), got_set.len(), "duplicates in star support");
        assert_eq!(got_set, enumerate_rays(8, 10));
        assert_eq!(got[0], (0, 0));

        let e = depth_laplacian(&z);
        let cfg = StarConfig::threshold(16, 7, 0.1).unwrap();
        let got: BTreeSet<Offset> = star_trace(20, 20, &z, Some(&e), &cfg).unwrap().into_iter().collect();
        assert_eq!(got, enumerate_rays(16, 7));
    }

    #[test]
    fn covered_depth_stops_before_jump() {
        // Ray 0 walks +u: depths 5.0 (center), 5.1, 5.2, 7.0, 5.0...
        let profile = [5.0, 5.1, 5.2, 7.0, 5.0, 5.0, 5.0];
        let z = field(12, 11, |u, _| if u >= 5 { profile[u - 5] } else { 5.0 });
        let cfg = StarConfig::covered_depth(4, 5, 0.1).unwrap();
        let got = star_trace(5, 5, &z, None, &cfg).unwrap();
        assert!(got.contains(&(1, 0)));
        assert!(got.contains(&(2, 0)));
        assert!(!got.contains(&(3, 0)));
        assert!(!got.contains(&(4, 0)));
        // Other rays are unaffected.
        assert!(got.contains(&(-5, 0)));
        assert!(got.contains(&(0, 5)));
    }

    #[test]
    fn threshold_excludes_edge_and_beyond() {
        let z = field(15, 15, |_, _| 5.0);
        let mut e = depth_laplacian(&z);
        e.set(10, 7, 0.5);
        let cfg = StarConfig::threshold(4, 6, 0.1).unwrap();
        let got = star_trace(7, 7, &z, Some(&e), &cfg).unwrap();
        assert!(got.contains(&(1, 0)));
        assert!(got.contains(&(2, 0)));
        for i in 3..=6 {
            assert!(!got.contains(&(i, 0)));
        }
        assert!(got.contains(&(-6, 0)));
    }

    #[test]
    fn threshold_without_edges_is_an_error() {
        let z = field(5, 5, |_, _| 1.0);
        let cfg = StarConfig::threshold(8, 2, 0.1).unwrap();
        assert!(star_trace(2, 2, &z, None, &cfg).is_err());
    }

    #[test]
    fn invalid_center_selects_nothing() {
        let mut z = field(5, 5, |_, _| 1.0);
        z.invalidate(2, 2);
        let cfg = StarConfig::covered_depth(8, 2, 0.1).unwrap();
        assert!(star_trace(2, 2, &z, None, &cfg).unwrap().is_empty());
    }

    #[test]
    fn collinear_support_is_invalid() {
        // Only the horizontal neighbours are usable.
        let d = ScalarField::from_fn(9, 9, |u, v| (v == 4).then_some(10.0 + u as f64));
        let z = d.map(|&x| 100.0 / x);
        let cfg = StarConfig::covered_depth(8, 3, 0.5).unwrap();
        let support = star_trace(4, 4, &z, None, &cfg).unwrap();
        assert!(support.iter().all(|&(_, dy)| dy == 0));
        assert_eq!(estimate_affine_adaptive(&d, &z, None, 4, 4, &cfg).unwrap(), None);
    }

    #[test]
    fn per_pixel_scope_is_at_most_per_ray() {
        let z = field(21, 21, |u, v| 5.0 + 0.04 * u as f64 - 0.03 * v as f64);
        let per_ray = StarConfig::covered_depth(8, 10, 0.05).unwrap();
        let mut per_pixel = per_ray;
        per_pixel.stop = StopRule::CoveredDepth {
            k: 0.05,
            scope: DepthScope::PerPixel,
        };
        let a: BTreeSet<Offset> = star_trace(10, 10, &z, None, &per_ray).unwrap().into_iter().collect();
        let b: BTreeSet<Offset> = star_trace(10, 10, &z, None, &per_pixel).unwrap().into_iter().collect();
        assert!(b.is_subset(&a));
        assert!(b.len() < a.len());
    }

    fn noisy(seed: u64, w: usize, h: usize) -> ScalarField {
        field(w, h, |u, v| {
            let x = (u as u64 * 73856093) ^ (v as u64 * 19349663) ^ seed.wrapping_mul(83492791);
            5.0 + ((x % 1000) as f64) / 1000.0
        })
    }

    proptest! {
        #[test]
        fn support_is_sound(seed in 0u64..500, u in 0usize..24, v in 0usize..20, m in 3usize..17, s in 1usize..12, k in 0.01f64..0.3) {
            let z = noisy(seed, 24, 20);
            let cfg = StarConfig::covered_depth(m, s, k).unwrap();
            let got = star_trace(u, v, &z, None, &cfg).unwrap();
            for &(dx, dy) in &got {
                let (pu, pv) = (u as i64 + dx as i64, v as i64 + dy as i64);
                prop_assert!(z.get_signed(pu, pv).is_some());
                prop_assert!(dx.unsigned_abs().max(dy.unsigned_abs()) as usize <= s);
            }
        }

        #[test]
        fn larger_threshold_never_shrinks(seed in 0u64..500, u in 0usize..24, v in 0usize..20, k in 0.01f64..0.2, extra in 0.0f64..0.2) {
            let z = noisy(seed, 24, 20);
            let e = depth_laplacian(&z);
            for (lo, hi) in [
                (StarConfig::covered_depth(8, 6, k).unwrap(), StarConfig::covered_depth(8, 6, k + extra).unwrap()),
                (StarConfig::threshold(8, 6, 10.0 * k).unwrap(), StarConfig::threshold(8, 6, 10.0 * (k + extra)).unwrap()),
            ] {
                let a: BTreeSet<Offset> = star_trace(u, v, &z, Some(&e), &lo).unwrap().into_iter().collect();
                let b: BTreeSet<Offset> = star_trace(u, v, &z, Some(&e), &hi).unwrap().into_iter().collect();
                prop_assert!(a.is_subset(&b));
            }
        }

        #[test]
        fn infinite_thresholds_match_direct(seed in 0u64..500, u in 0usize..24, v in 0usize..20, m in 3usize..17, s in 1usize..9) {
            let d = noisy(seed, 24, 20);
            let z = d.map(|&x| 50.0 / x);
            let cfg = StarConfig::covered_depth(m, s, f64::INFINITY).unwrap();
            let support = star_trace(u, v, &z, None, &cfg).unwrap();
            let spec = KernelSpec::new(support).unwrap();
            let direct = estimate_affine_direct(&d, u, v, &spec);
            let adaptive = estimate_affine_adaptive(&d, &z, None, u, v, &cfg).unwrap();
            match (direct, adaptive) {
                (Some((a, b)), Some((c, e))) => {
                    prop_assert!((a - c).abs() <= 1e-9 * a.abs().max(1.0));
                    prop_assert!((b - e).abs() <= 1e-9 * b.abs().max(1.0));
                }
                (None, None) => {}
                other => prop_assert!(false, "validity differs: {:?}", other),
            }
        }
    }
}
