//! Fixed-shape least-squares kernels and the two-step convolutional estimator.
//!
//! For a support of pixel offsets `v_i` around a center pixel `c`, the affine
//! parameters of the rectified model satisfy `v_ix*(a1-1) + v_iy*a2 = e_i - e_c`
//! where `e = -d` is the horizontal offset from the left to the right image
//! (disparities here are positive, `d = fx*b/z`).
//! The least-squares solution `S = (V^T V)^-1 V^T` only depends on the offsets,
//! so for a fixed shape it reduces to two convolutions (step 1) followed by a
//! per-pixel correction with `delta1`, `delta2` and `1` (step 2).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{AffineField, NormalField, ScalarField};
use crate::geometry::{normal_from_affine, triangulate, StereoRig};

/// Pixel displacement `(dx, dy)`: column and row offset from the observed pixel.
pub type Offset = (i32, i32);

/// Shape of the pixel support around each observed pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    offsets: Vec<Offset>,
}

impl KernelSpec {
    /// Arbitrary offset set. Offsets must be distinct.
    pub fn new(offsets: Vec<Offset>) -> Result<Self> {
        let mut sorted = offsets.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("kernel offsets must be distinct".into()));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one offset".into()));
        }
        Ok(Self { offsets })
    }

    /// Centered `size x size` square, offsets in raster order (top row first).
    pub fn square(size: usize) -> Result<Self> {
        if size < 3 || size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "square kernel size must be odd and >= 3, got {size}"
            )));
        }
        let r = (size / 2) as i32;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .collect();
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    /// Inclusive bounding box `(min_dx, min_dy, max_dx, max_dy)`.
    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        self.offsets.iter().fold(
            (i32::MAX, i32::MAX, i32::MIN, i32::MIN),
            |(x0, y0, x1, y1), &(dx, dy)| (x0.min(dx), y0.min(dy), x1.max(dx), y1.max(dy)),
        )
    }
}

/// Normal-equation moments of an offset set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Moments {
    #[inline]
    pub fn add(&mut self, dx: f64, dy: f64) {
        self.alpha += dx * dx;
        self.beta += dx * dy;
        self.gamma += dy * dy;
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.alpha * self.gamma - self.beta * self.beta
    }

    /// Offsets are integral, so a non-singular determinant is at least 1.
    #[inline]
    pub fn is_singular(&self) -> bool {
        !(self.det() > 0.5)
    }

    /// Row weights `(s1, s2)` of `(V^T V)^-1 V^T` for one offset.
    #[inline]
    pub fn weights(&self, dx: f64, dy: f64) -> (f64, f64) {
        let det = self.det();
        (
            (self.gamma * dx - self.beta * dy) / det,
            (-self.beta * dx + self.alpha * dy) / det,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedKernels {
    spec: KernelSpec,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub det: f64,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

impl PrecomputedKernels {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
}

pub fn build_kernels(spec: &KernelSpec) -> Result<PrecomputedKernels> {
    let mut m = Moments::default();
    for &(dx, dy) in spec.offsets() {
        m.add(dx as f64, dy as f64);
    }
    if m.is_singular() {
        return Err(Error::SingularConfiguration { det: m.det() });
    }
    let (s1, s2): (Vec<f64>, Vec<f64>) = spec
        .offsets()
        .iter()
        .map(|&(dx, dy)| m.weights(dx as f64, dy as f64))
        .unzip();
    let delta1 = s1.iter().sum();
    let delta2 = s2.iter().sum();
    Ok(PrecomputedKernels {
        spec: spec.clone(),
        alpha: m.alpha,
        beta: m.beta,
        gamma: m.gamma,
        det: m.det(),
        s1,
        s2,
        delta1,
        delta2,
    })
}

/// Affine parameters at every pixel whose full support is in-bounds and valid.
pub fn convolve_affine(disparity: &ScalarField, kernels: &PrecomputedKernels) -> AffineField {
    let (w, h) = (disparity.width(), disparity.height());
    let (x0, y0, x1, y1) = kernels.spec.bounds();
    let taps: Vec<(isize, f64, f64)> = kernels
        .spec
        .offsets()
        .iter()
        .zip(kernels.s1.iter().zip(&kernels.s2))
        .map(|(&(dx, dy), (&s1, &s2))| (dy as isize * w as isize + dx as isize, s1, s2))
        .collect();
    let values = disparity.values();
    let mask = disparity.mask();

    AffineField::par_from_fn(w, h, |u, v| {
        let (ui, vi) = (u as i64, v as i64);
        if ui + (x0 as i64) < 0
            || vi + (y0 as i64) < 0
            || ui + x1 as i64 >= w as i64
            || vi + y1 as i64 >= h as i64
        {
            return None;
        }
        let c = v * w + u;
        if !mask[c] {
            return None;
        }
        // Step 1: convolution with the two precomputed kernels.
        let mut conv1 = 0.0;
        let mut conv2 = 0.0;
        for &(off, s1, s2) in &taps {
            let i = (c as isize + off) as usize;
            if !mask[i] {
                return None;
            }
            let d = values[i];
            conv1 += s1 * d;
            conv2 += s2 * d;
        }
        // Step 2: center correction. The right-image offset is -d.
        let dc = values[c];
        Some([1.0 - (conv1 - dc * kernels.delta1), dc * kernels.delta2 - conv2])
    })
}

/// Solves the small least-squares system for one pixel over the valid,
/// in-bounds offsets of `spec`. Masked or out-of-bounds offsets are skipped.
pub fn estimate_affine_direct(disparity: &ScalarField, u: usize, v: usize, spec: &KernelSpec) -> Option<(f64, f64)> {
    let &dc = disparity.get(u, v)?;
    let support = spec.offsets().iter().filter_map(|&(dx, dy)| {
        disparity
            .get_signed(u as i64 + dx as i64, v as i64 + dy as i64)
            .map(|&d| (dx, dy, d - dc))
    });
    solve_support(support)
}

/// Least-squares `(a1, a2)` from `(dx, dy, d_i - d_c)` samples.
pub(crate) fn solve_support(samples: impl Iterator<Item = (i32, i32, f64)>) -> Option<(f64, f64)> {
    let mut m = Moments::default();
    let (mut bx, mut by) = (0.0, 0.0);
    for (dx, dy, dd) in samples {
        let (fx, fy) = (dx as f64, dy as f64);
        m.add(fx, fy);
        bx += fx * dd;
        by += fy * dd;
    }
    if m.is_singular() {
        return None;
    }
    let det = m.det();
    let gx = (m.gamma * bx - m.beta * by) / det;
    let gy = (-m.beta * bx + m.alpha * by) / det;
    Some((1.0 - gx, -gy))
}

/// Turns an affine field into camera-facing unit normals.
pub fn normals_from_affine_field(affine: &AffineField, disparity: &ScalarField, rig: &StereoRig) -> NormalField {
    NormalField::par_from_fn(affine.width(), affine.height(), |u, v| {
        let &[a1, a2] = affine.get(u, v)?;
        let &d = disparity.get(u, v)?;
        let p = triangulate(u as f64, v as f64, d, rig)?;
        normal_from_affine(a1, a2, &p, rig)
    })
}

/// Dense normals with a fixed kernel shape.
pub fn estimate_normals_fixed(disparity: &ScalarField, rig: &StereoRig, spec: &KernelSpec) -> Result<NormalField> {
    rig.validate()?;
    let kernels = build_kernels(spec)?;
    let affine = convolve_affine(disparity, &kernels);
    Ok(normals_from_affine_field(&affine, disparity, rig))
}

/// Human-readable weight dump: the `s1` and `s2` grids over the kernel's
/// bounding box (cells outside the support shown as `.`), followed by one
/// line per offset.
pub fn format_kernel_dump(k: &PrecomputedKernels) -> String {
    let tidy = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    let mut out = String::new();
    let (x0, y0, x1, y1) = k.spec.bounds();
    let _ = writeln!(out, "# affine kernel: {} offsets", k.s1.len());
    let _ = writeln!(out, "alpha  {:.6}", tidy(k.alpha));
    let _ = writeln!(out, "beta   {:.6}", tidy(k.beta));
    let _ = writeln!(out, "gamma  {:.6}", tidy(k.gamma));
    let _ = writeln!(out, "det    {:.6}", tidy(k.det));
    let _ = writeln!(out, "delta1 {:.6}", tidy(k.delta1));
    let _ = writeln!(out, "delta2 {:.6}", tidy(k.delta2));
    for (name, weights) in [("s1", &k.s1), ("s2", &k.s2)] {
        let _ = writeln!(out, "\n[{name}] rows dy={y0}..={y1}, cols dx={x0}..={x1}");
        for dy in y0..=y1 {
            let row: Vec<String> = (x0..=x1)
                .map(|dx| {
                    match k.spec.offsets().iter().position(|&o| o == (dx, dy)) {
                        Some(i) => format!("{:>11.6}", tidy(weights[i])),
                        None => format!("{:>11}", "."),
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    let _ = writeln!(out, "\n[offsets] index dy dx s1 s2");
    for (i, &(dx, dy)) in k.spec.offsets().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4} [{dy:>3}, {dx:>3}] {:>12.8} {:>12.8}",
            i + 1,
            tidy(k.s1[i]),
            tidy(k.s2[i])
        );
    }
    out
}
