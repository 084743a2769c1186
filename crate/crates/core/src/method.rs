//! The estimator families behind one dispatchable type.

use serde::{Deserialize, Serialize};

use crate::adaptive::{estimate_normals_adaptive, StarConfig, StopRule};
use crate::baselines::{estimate_normals_cross, estimate_normals_pca};
use crate::error::Result;
use crate::field::{NormalField, ScalarField};
use crate::geometry::StereoRig;
use crate::kernel::{estimate_normals_fixed, KernelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    AffineFixed { kernel: usize },
    Adaptive(StarConfig),
    Pca { window: usize },
    Cross,
}

impl Method {
    /// Short label in the style `Affine 9x9`, `CD[s:10 d:8 k:0.1]`.
    pub fn label(&self) -> String {
        match self {
            Method::AffineFixed { kernel } => format!("Affine {kernel}x{kernel}"),
            Method::Adaptive(c) => match c.stop {
                StopRule::Threshold { t } => format!("ST[s:{} d:{} t:{t}]", c.max_steps, c.directions),
                StopRule::CoveredDepth { k, .. } => format!("CD[s:{} d:{} k:{k}]", c.max_steps, c.directions),
            },
            Method::Pca { window } => format!("PCA {window}x{window}"),
            Method::Cross => "Cross".to_string(),
        }
    }

    pub fn estimate(&self, disparity: &ScalarField, rig: &StereoRig) -> Result<NormalField> {
        match self {
            Method::AffineFixed { kernel } => estimate_normals_fixed(disparity, rig, &KernelSpec::square(*kernel)?),
            Method::Adaptive(c) => estimate_normals_adaptive(disparity, rig, c),
            Method::Pca { window } => estimate_normals_pca(disparity, rig, *window),
            Method::Cross => estimate_normals_cross(disparity, rig),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(Method::AffineFixed { kernel: 9 }.label(), "Affine 9x9");
        assert_eq!(Method::Pca { window: 15 }.label(), "PCA 15x15");
        assert_eq!(Method::Cross.label(), "Cross");
        let cd = Method::Adaptive(StarConfig::covered_depth(8, 10, 0.1).unwrap());
        assert_eq!(cd.label(), "CD[s:10 d:8 k:0.1]");
        let st = Method::Adaptive(StarConfig::threshold(16, 30, 0.5).unwrap());
        assert_eq!(st.label(), "ST[s:30 d:16 t:0.5]");
    }

    #[test]
    fn bad_parameters_surface_as_errors() {
        let d = ScalarField::from_fn(8, 8, |_, _| Some(10.0));
        let rig = StereoRig::centered(100.0, 0.1, 8, 8).unwrap();
        assert!(Method::AffineFixed { kernel: 4 }.estimate(&d, &rig).is_err());
        assert!(Method::Pca { window: 2 }.estimate(&d, &rig).is_err());
        assert!(Method::Cross.estimate(&d, &rig).is_ok());
    }
}
