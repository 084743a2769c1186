//! Dense per-pixel grids with a validity mask.
//!
//! All maps in this crate (disparity, depth, edge measures, affine parameters,
//! normals, angular errors) share the same layout: row-major storage with
//! `v` (row) increasing downward and `u` (column) increasing to the right.
//! Values at invalid pixels are unspecified and never read.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    mask: Vec<bool>,
}

/// Scalar map: disparity, depth, edge magnitude, angular error.
pub type ScalarField = Field<f64>;
/// Per-pixel affine parameters `(a1, a2)`.
pub type AffineField = Field<[f64; 2]>;
/// Per-pixel unit normals, camera-facing.
pub type NormalField = Field<Vector3<f64>>;

impl<T: Clone + Default> Field<T> {
    /// A field with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![T::default(); width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<T>) -> Self {
        let mut out = Self::invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                if let Some(x) = f(u, v) {
                    out.set(u, v, x);
                }
            }
        }
        out
    }
}

impl<T: Clone + Default + Send + Sync> Field<T> {
    /// Evaluates `f` at every pixel, in parallel over rows.
    ///
    /// Each row is written by exactly one task, so the result does not depend
    /// on the number of threads in the current rayon pool.
    pub fn par_from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Option<T> + Sync,
    {
        let mut out = Self::invalid(width, height);
        if width == 0 {
            return out;
        }
        out.values
            .par_chunks_mut(width)
            .zip(out.mask.par_chunks_mut(width))
            .enumerate()
            .for_each(|(v, (vals, mask))| {
                for u in 0..width {
                    if let Some(x) = f(u, v) {
                        vals[u] = x;
                        mask[u] = true;
                    }
                }
            });
        out
    }

    /// Like [`Field::par_from_fn`], with per-task scratch state from `init`.
    pub fn par_from_fn_with<S, I, F>(width: usize, height: usize, init: I, f: F) -> Self
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, usize, usize) -> Option<T> + Sync,
    {
        let mut out = Self::invalid(width, height);
        if width == 0 {
            return out;
        }
        out.values
            .par_chunks_mut(width)
            .zip(out.mask.par_chunks_mut(width))
            .enumerate()
            .for_each_init(&init, |scratch, (v, (vals, mask))| {
                for u in 0..width {
                    if let Some(x) = f(scratch, u, v) {
                        vals[u] = x;
                        mask[u] = true;
                    }
                }
            });
        out
    }
}

impl<T> Field<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || mask.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field {width}x{height} needs {n} values and mask entries, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            mask,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.mask[self.index(u, v)]
    }

    /// Value at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<&T> {
        let i = self.index(u, v);
        if self.mask[i] {
            Some(&self.values[i])
        } else {
            None
        }
    }

    /// Value at signed coordinates; `None` when out of bounds or invalid.
    #[inline]
    pub fn get_signed(&self, u: i64, v: i64) -> Option<&T> {
        if self.contains(u, v) {
            self.get(u as usize, v as usize)
        } else {
            None
        }
    }

    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index(u, v);
        self.values[i] = value;
        self.mask[i] = true;
    }

    pub fn invalidate(&mut self, u: usize, v: usize) {
        let i = self.index(u, v);
        self.mask[i] = false;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Valid values in raster order.
    pub fn valid_values(&self) -> impl Iterator<Item = &T> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(x, &m)| m.then_some(x))
    }

    /// Per-pixel map preserving the mask.
    pub fn map<U: Clone + Default>(&self, mut f: impl FnMut(&T) -> U) -> Field<U> {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(x, &m)| if m { f(x) } else { U::default() })
            .collect();
        Field {
            width: self.width,
            height: self.height,
            values,
            mask: self.mask.clone(),
        }
    }

    pub fn same_shape<U>(&self, other: &Field<U>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn into_parts(self) -> (usize, usize, Vec<T>, Vec<bool>) {
        (self.width, self.height, self.values, self.mask)
    }
}

impl ScalarField {
    /// Field with every pixel valid.
    pub fn dense(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(width, height, values, vec![true; n])
    }

    /// Marks non-finite values invalid.
    pub fn from_samples(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mask = values.iter().map(|x| x.is_finite()).collect();
        Self::new(width, height, values, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(ScalarField::new(2, 2, vec![0.0; 3], vec![true; 4]).is_err());
        assert!(ScalarField::new(2, 2, vec![0.0; 4], vec![true; 3]).is_err());
    }

    #[test]
    fn masked_reads_return_none() {
        let f = ScalarField::new(2, 1, vec![1.0, 2.0], vec![true, false]).unwrap();
        assert_eq!(f.get(0, 0), Some(&1.0));
        assert_eq!(f.get(1, 0), None);
        assert_eq!(f.get_signed(-1, 0), None);
        assert_eq!(f.get_signed(0, 1), None);
        assert_eq!(f.valid_count(), 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = |u: usize, v: usize| ((u + v) % 3 != 0).then(|| (u * 7 + v) as f64);
        let a = ScalarField::from_fn(17, 9, f);
        let b = ScalarField::par_from_fn(17, 9, f);
        assert_eq!(a, b);
    }

    #[test]
    fn from_samples_masks_non_finite() {
        let f = ScalarField::from_samples(3, 1, vec![1.0, f64::NAN, f64::INFINITY]).unwrap();
        assert_eq!(f.mask(), &[true, false, false]);
    }
}
