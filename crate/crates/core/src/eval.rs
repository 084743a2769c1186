//! Angular error maps and summary statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NormalField, ScalarField};
use crate::geometry::unsigned_angle_deg;

/// Summary of an angular error map, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub valid_count: usize,
}

/// Unsigned angle between estimate and ground truth at jointly valid pixels,
/// optionally restricted to `region`.
pub fn angular_error_map(est: &NormalField, gt: &NormalField, region: Option<&[bool]>) -> Result<ScalarField> {
    est.same_shape(gt)?;
    if let Some(r) = region {
        if r.len() != est.len() {
            return Err(Error::InvalidArgument(format!(
                "region mask has {} entries, expected {}",
                r.len(),
                est.len()
            )));
        }
    }
    Ok(ScalarField::from_fn(est.width(), est.height(), |u, v| {
        if let Some(r) = region {
            if !r[est.index(u, v)] {
                return None;
            }
        }
        Some(unsigned_angle_deg(est.get(u, v)?, gt.get(u, v)?))
    }))
}

/// Statistics over the valid pixels of `errors`. Sums run in raster order.
pub fn summarize(errors: &ScalarField) -> Result<ErrorStats> {
    let mut vals: Vec<f64> = errors.valid_values().copied().collect();
    if vals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = vals.len() as f64;
    let avg = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / n;
    vals.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        avg,
        min: vals[0],
        max: vals[vals.len() - 1],
        median: vals[(vals.len() - 1) / 2],
        std: var.sqrt(),
        valid_count: vals.len(),
    })
}

/// One labelled run, as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub label: String,
    #[serde(flatten)]
    pub stats: ErrorStats,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub records: Vec<StatsRecord>,
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let width = self
            .records
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("Method".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
            "Method", "Avg", "Min", "Max", "Med", "Std", "N"
        );
        for r in &self.records {
            let s = &r.stats;
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}",
                r.label, s.avg, s.min, s.max, s.median, s.std, s.valid_count
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("stats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records = serde_json::from_str(text).map_err(|e| Error::format(e.column(), e.to_string()))?;
        Ok(Self { records })
    }
}

/// Rows sorted by label (stable for equal labels).
pub fn compare_table(runs: &[(String, ErrorStats)]) -> ComparisonTable {
    let mut records: Vec<StatsRecord> = runs
        .iter()
        .map(|(label, stats)| StatsRecord {
            label: label.clone(),
            stats: *stats,
            config: serde_json::Value::Null,
        })
        .collect();
    records.sort_by(|a, b| a.label.cmp(&b.label));
    ComparisonTable { records }
}

/// Pixels within `radius` (Chebyshev) of a ground-truth discontinuity: a
/// 4-neighbour that is background, or a disparity jump above `jump` pixels.
pub fn discontinuity_band(disparity: &ScalarField, jump: f64, radius: usize) -> Vec<bool> {
    let (w, h) = (disparity.width(), disparity.height());
    let mut edge = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(&d) = disparity.get(u, v) else { continue };
            let neighbours = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)];
            edge[v * w + u] = neighbours.iter().any(|&(du, dv)| {
                let (x, y) = (u as i64 + du, v as i64 + dv);
                if !disparity.contains(x, y) {
                    return false;
                }
                match disparity.get(x as usize, y as usize) {
                    None => true,
                    Some(&e) => (e - d).abs() > jump,
                }
            });
        }
    }
    let r = radius as i64;
    let mut band = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            if !edge[v * w + u] {
                continue;
            }
            for y in (v as i64 - r).max(0)..=(v as i64 + r).min(h as i64 - 1) {
                for x in (u as i64 - r).max(0)..=(u as i64 + r).min(w as i64 - 1) {
                    band[y as usize * w + x as usize] = true;
                }
            }
        }
    }
    band
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normals(w: usize, h: usize, f: impl Fn(usize, usize) -> Option<Vector3<f64>>) -> NormalField {
        NormalField::from_fn(w, h, f)
    }

    #[test]
    fn identical_and_flipped_are_zero() {
        let gt = normals(3, 2, |u, v| Some(Vector3::new(u as f64, v as f64, -2.0).normalize()));
        let flipped = gt.map(|n| -n);
        for est in [&gt, &flipped] {
            let e = angular_error_map(est, &gt, None).unwrap();
            assert!(e.valid_values().all(|&x| x < 1e-6));
        }
    }

    #[test]
    fn perpendicular_is_ninety() {
        let a = normals(1, 1, |_, _| Some(Vector3::x()));
        let b = normals(1, 1, |_, _| Some(Vector3::y()));
        assert_eq!(angular_error_map(&a, &b, None).unwrap().get(0, 0), Some(&90.0));
    }

    #[test]
    fn masks_combine() {
        let a = normals(3, 1, |u, _| (u != 0).then(Vector3::z));
        let b = normals(3, 1, |u, _| (u != 1).then(Vector3::z));
        let e = angular_error_map(&a, &b, None).unwrap();
        assert_eq!(e.mask(), &[false, false, true]);
        let e = angular_error_map(&a, &b, Some(&[true, true, false])).unwrap();
        assert_eq!(e.valid_count(), 0);
        assert!(matches!(summarize(&e), Err(Error::EmptyInput)));
        assert!(angular_error_map(&a, &normals(2, 1, |_, _| None), None).is_err());
    }

    #[test]
    fn simple_stats() {
        let s = summarize(&ScalarField::dense(2, 2, vec![5.0; 4]).unwrap()).unwrap();
        assert_eq!((s.avg, s.median, s.std, s.valid_count), (5.0, 5.0, 0.0, 4));
        let s = summarize(&ScalarField::dense(2, 1, vec![0.0, 90.0]).unwrap()).unwrap();
        assert_eq!((s.avg, s.std, s.min, s.max, s.median), (45.0, 45.0, 0.0, 90.0, 0.0));
    }

    #[test]
    fn matches_sort_and_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let vals: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..90.0)).collect();
        let mask: Vec<bool> = (0..100_000).map(|i| i % 13 != 0).collect();
        let field = ScalarField::new(1000, 100, vals.clone(), mask.clone()).unwrap();
        let s = summarize(&field).unwrap();

        let mut kept: Vec<f64> = vals.iter().zip(&mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect();
        kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = kept.len() as f64;
        let mean = kept.iter().sum::<f64>() / n;
        let std = (kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert_relative_eq!(s.avg, mean, max_relative = 1e-10);
        assert_relative_eq!(s.std, std, max_relative = 1e-10);
        assert_eq!(s.min, kept[0]);
        assert_eq!(s.max, *kept.last().unwrap());
        assert_eq!(s.median, kept[(kept.len() - 1) / 2]);
        assert_eq!(s.valid_count, kept.len());
    }

    #[test]
    fn table_ordering_and_json() {
        let st = |x: f64| ErrorStats {
            avg: x,
            min: 0.0,
            max: 2.0 * x,
            median: x,
            std: 0.5,
            valid_count: 10,
        };
        let one = compare_table(&[("Affine 9x9".into(), st(2.0))]);
        assert_eq!(one.render().lines().count(), 2);
        let t = compare_table(&[("PCA 9x9".into(), st(3.0)), ("Affine 9x9".into(), st(2.0))]);
        let labels: Vec<_> = t.records.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["Affine 9x9", "PCA 9x9"]);
        assert_eq!(ComparisonTable::from_json(&t.to_json()).unwrap(), t);
        assert!(t.render().contains("Affine 9x9"));
    }

    #[test]
    fn band_around_jumps_and_background() {
        let d = ScalarField::from_fn(20, 5, |u, _| match u {
            0..=4 => None,
            5..=11 => Some(10.0),
            _ => Some(20.0),
        });
        let band = discontinuity_band(&d, 0.5, 1);
        let row: Vec<bool> = (0..20).map(|u| band[2 * 20 + u]).collect();
        let expected: Vec<bool> = (0..20).map(|u| (4..=6).contains(&u) || (10..=13).contains(&u)).collect();
        assert_eq!(row, expected);
    }

    proptest! {
        #[test]
        fn metric_is_symmetric(ax in -1.0f64..1.0, ay in -1.0f64..1.0, bx in -1.0f64..1.0, by in -1.0f64..1.0) {
            let a = normals(1, 1, |_, _| Some(Vector3::new(ax, ay, -1.0).normalize()));
            let b = normals(1, 1, |_, _| Some(Vector3::new(bx, by, -1.0).normalize()));
            let ab = angular_error_map(&a, &b, None).unwrap();
            let ba = angular_error_map(&b, &a, None).unwrap();
            prop_assert_eq!(ab.get(0, 0), ba.get(0, 0));
            let e = *ab.get(0, 0).unwrap();
            prop_assert!((0.0..=90.0).contains(&e));
        }
    }
}
