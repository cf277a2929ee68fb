//! Coordinate-level augmentation as an affine group: horizontal flip, shift
//! and scale act on pixel coordinates, keypoint identities, orientations and
//! camera intrinsics, and can be undone exactly to compare predictions made
//! under different augmentations in one canonical frame.
//!
//! The flip is applied before the affine matrix; a fixed composition order
//! keeps the inverse well defined. Color jittering never touches
//! coordinates and is represented by the identity element.

use thiserror::Error;

use crate::codec::{encode_orientation, Prediction};
use crate::geometry::{alpha_to_theta, normalize_angle, CameraModel, KeypointSet};
use crate::grm::{self, GrmError};
use crate::{Mat3x4, Vec2};

/// Scale range accepted by [`make_aug`].
pub const SCALE_RANGE: (f64, f64) = (0.6, 1.4);

/// Keypoint relabeling under a horizontal mirror: the mirrored box (with
/// negated yaw) has its corners swapped along the length axis, so corner
/// pairs (1,4), (2,3), (5,8), (6,7) exchange; the center stays put.
pub const FLIP_PERMUTATION: [usize; 9] = [3, 2, 1, 0, 7, 6, 5, 4, 8];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("scale {0} outside [{lo}, {hi}]", lo = SCALE_RANGE.0, hi = SCALE_RANGE.1)]
    InvalidScale(f64),
}

/// A coordinate-dependent augmentation: optional horizontal flip followed by
/// a 2x3 affine map, with the source image width needed by the flip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineAug {
    /// Row-major 2x3 matrix applied to `(u, v, 1)`.
    pub matrix: [[f64; 3]; 2],
    /// Mirror `u -> width - 1 - u` before the affine map.
    pub flip: bool,
    /// Width in pixels of the image the flip refers to.
    pub image_width: f64,
}

/// Builds a uniform scale + shift (+ optional flip) augmentation.
pub fn make_aug(
    scale: f64,
    shift: (f64, f64),
    flip: bool,
    image_width: f64,
) -> Result<AffineAug, AugmentError> {
    if !(SCALE_RANGE.0..=SCALE_RANGE.1).contains(&scale) {
        return Err(AugmentError::InvalidScale(scale));
    }
    Ok(AffineAug {
        matrix: [[scale, 0.0, shift.0], [0.0, scale, shift.1]],
        flip,
        image_width,
    })
}

impl AffineAug {
    /// The group identity for a given image width.
    pub fn identity(image_width: f64) -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            flip: false,
            image_width,
        }
    }

    /// Maps a pixel point through flip-then-affine.
    pub fn apply_point(&self, p: Vec2) -> Vec2 {
        let u = if self.flip {
            self.image_width - 1.0 - p.x
        } else {
            p.x
        };
        let m = &self.matrix;
        Vec2::new(
            m[0][0] * u + m[0][1] * p.y + m[0][2],
            m[1][0] * u + m[1][1] * p.y + m[1][2],
        )
    }

    /// Inverse of [`AffineAug::apply_point`].
    pub fn invert_point(&self, p: Vec2) -> Vec2 {
        let m = &self.matrix;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        debug_assert!(det.abs() > 1e-9, "affine linear part is not invertible");
        let rx = p.x - m[0][2];
        let ry = p.y - m[1][2];
        let u = (m[1][1] * rx - m[0][1] * ry) / det;
        let v = (-m[1][0] * rx + m[0][0] * ry) / det;
        let u = if self.flip {
            self.image_width - 1.0 - u
        } else {
            u
        };
        Vec2::new(u, v)
    }
}

/// Transforms a keypoint set: every point is mapped and, under a flip, the
/// corner indices (and mask) are relabeled so index `i` still names the same
/// semantic corner of the mirrored box.
pub fn apply_keypoints(aug: &AffineAug, kps: &KeypointSet) -> KeypointSet {
    let mut out = *kps;
    for (i, &mirrored) in FLIP_PERMUTATION.iter().enumerate() {
        let src = if aug.flip { mirrored } else { i };
        out.points[i] = aug.apply_point(kps.points[src]);
        out.mask[i] = kps.mask[src];
    }
    out
}

/// Undoes [`apply_keypoints`].
pub fn invert_keypoints(aug: &AffineAug, kps: &KeypointSet) -> KeypointSet {
    let mut out = *kps;
    for (i, &mirrored) in FLIP_PERMUTATION.iter().enumerate() {
        let src = if aug.flip { mirrored } else { i };
        out.points[i] = aug.invert_point(kps.points[src]);
        out.mask[i] = kps.mask[src];
    }
    out
}

/// Local orientation of the transformed box: a mirror negates it, scale and
/// shift leave it alone.
pub fn apply_alpha(aug: &AffineAug, alpha: f64) -> f64 {
    if aug.flip {
        normalize_angle(-alpha)
    } else {
        alpha
    }
}

/// Adjusts the camera so that projecting the (mirrored, for flips) 3D scene
/// through it reproduces [`AffineAug::apply_point`] of the original
/// projection.
pub fn apply_intrinsics(aug: &AffineAug, cam: &CameraModel) -> CameraModel {
    let (fx, fy, cx, cy, sk) = (cam.fx(), cam.fy(), cam.cx(), cam.cy(), cam.skew());
    let t = cam.offset();
    let (cx, sk, t) = if aug.flip {
        (
            aug.image_width - 1.0 - cx,
            -sk,
            crate::Vec3::new(-t.x, t.y, t.z),
        )
    } else {
        (cx, sk, t)
    };
    let m = &aug.matrix;
    // Pixel map (u, v) -> L (u, v) + d lifts to the intrinsics rows as
    // K'[0..2] = L K[0..2] + d K[2] with K[2] = (0, 0, 1).
    let k_rows = [
        [
            m[0][0] * fx,
            m[0][0] * sk + m[0][1] * fy,
            m[0][0] * cx + m[0][1] * cy + m[0][2],
        ],
        [
            m[1][0] * fx,
            m[1][0] * sk + m[1][1] * fy,
            m[1][0] * cx + m[1][1] * cy + m[1][2],
        ],
    ];
    let mut p = Mat3x4::zeros();
    for (r, row) in k_rows.iter().enumerate() {
        for c in 0..3 {
            p[(r, c)] = row[c];
        }
    }
    p[(2, 2)] = 1.0;
    // Fourth column is K' t'.
    p[(0, 3)] = k_rows[0][0] * t.x + k_rows[0][1] * t.y + k_rows[0][2] * t.z;
    p[(1, 3)] = k_rows[1][0] * t.x + k_rows[1][1] * t.y + k_rows[1][2] * t.z;
    p[(2, 3)] = t.z;
    CameraModel::from_projection(p).expect("affine-adjusted intrinsics stay valid")
}

/// Maps predictions made in the canonical frame into the augmented frame,
/// simulating what an equivariant predictor would output there. Positions
/// are dropped; they are only meaningful in the canonical frame.
pub fn transform(preds: &[Prediction], aug: &AffineAug) -> Vec<Prediction> {
    preds
        .iter()
        .map(|p| {
            let alpha = apply_alpha(aug, p.alpha);
            Prediction {
                center: aug.apply_point(p.center),
                keypoints: apply_keypoints(aug, &p.keypoints),
                alpha,
                orient: encode_orientation(alpha),
                position: None,
                ..p.clone()
            }
        })
        .collect()
}

/// Restores predictions made under `aug` to the canonical frame: centers and
/// keypoints are mapped back, orientations un-flipped, and positions
/// recomputed with the original camera on the de-augmented keypoints.
pub fn dealign(
    preds: &[Prediction],
    aug: &AffineAug,
    cam: &CameraModel,
) -> Result<Vec<Prediction>, GrmError> {
    preds
        .iter()
        .map(|p| {
            let keypoints = invert_keypoints(aug, &p.keypoints);
            let alpha = apply_alpha(aug, p.alpha); // flip is an involution
            let theta = alpha_to_theta(alpha, keypoints.points[8], cam);
            let (position, _) = grm::solve_full(&keypoints, &p.dim, theta, cam)?;
            Ok(Prediction {
                center: aug.invert_point(p.center),
                keypoints,
                alpha,
                orient: encode_orientation(alpha),
                position: Some(position),
                ..p.clone()
            })
        })
        .collect()
}
