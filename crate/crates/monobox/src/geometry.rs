//! Forward perspective model: camera intrinsics, local box corners, yaw
//! rotation, keypoint normalization, local/global orientation conversion and
//! the 2D box enclosing a projected 3D box.
//!
//! Conventions: camera frame is x right, y down, z forward (meters). Boxes
//! are center-anchored; the conversion to the bottom-center position used by
//! label files lives in [`crate::kitti`]. Angles live in `(-pi, pi]`.

use nalgebra::Vector3;
use thiserror::Error;

use crate::{Mat3, Mat3x4, Vec2, Vec3};

/// Errors from the forward projection model.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// A box corner ended up at or behind the image plane.
    #[error("corner {index} has non-positive depth {depth:.3e} m")]
    NonPositiveDepth { index: usize, depth: f64 },
    /// The projection matrix cannot be decomposed into K[I | t].
    #[error("invalid projection matrix: {0}")]
    InvalidProjection(String),
    /// Box dimensions must be strictly positive.
    #[error("dimensions must be strictly positive, got ({h}, {w}, {l})")]
    InvalidDimension { h: f64, w: f64, l: f64 },
}

/// Index of the projected 3D center inside a [`KeypointSet`].
pub const CENTER_KEYPOINT: usize = 8;

/// Minimum depth (meters) accepted when projecting a point.
pub const MIN_DEPTH: f64 = 1e-6;

/// Local-corner sign table in units of `(l/2, h/2, w/2)`.
///
/// Index order is the one the position solver's right-hand side is written
/// in: four top corners, four bottom corners, then the box center. Entry
/// `[sx, sy, sz]` places the corner at `(sx*l/2, sy*h/2, sz*w/2)`.
pub const CORNER_SIGNS: [[f64; 3]; 9] = [
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, -1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [0.0, 0.0, 0.0],
];

/// Fold an angle into `(-pi, pi]` by repeated +-2pi steps.
pub fn normalize_angle(mut a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    while a <= -PI {
        a += TAU;
    }
    while a > PI {
        a -= TAU;
    }
    a
}

/// Box dimensions in meters: height, width, length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimension3D {
    pub h: f64,
    pub w: f64,
    pub l: f64,
}

impl Dimension3D {
    pub fn new(h: f64, w: f64, l: f64) -> Result<Self, GeometryError> {
        if h > 0.0 && w > 0.0 && l > 0.0 && h.is_finite() && w.is_finite() && l.is_finite() {
            Ok(Self { h, w, l })
        } else {
            Err(GeometryError::InvalidDimension { h, w, l })
        }
    }
}

/// A 3D box: dimensions, global yaw, local orientation and center position
/// in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectBox3D {
    pub dim: Dimension3D,
    /// Global yaw around the camera y axis, in `(-pi, pi]`.
    pub theta: f64,
    /// Orientation relative to the viewing ray through the projected center.
    pub alpha: f64,
    /// Box center (X, Y, Z) in meters; Z > 0.
    pub position: Vec3,
}

impl ObjectBox3D {
    /// Builds a box, normalizing both angles into `(-pi, pi]`.
    pub fn new(dim: Dimension3D, theta: f64, alpha: f64, position: Vec3) -> Self {
        Self {
            dim,
            theta: normalize_angle(theta),
            alpha: normalize_angle(alpha),
            position,
        }
    }
}

/// The 9 ordered perspective keypoints of a box (8 corners + center) with a
/// keep-mask used by keypoint dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointSet {
    /// Pixel coordinates, ordered per [`CORNER_SIGNS`].
    pub points: [Vec2; 9],
    /// `true` = keypoint participates in position solving.
    pub mask: [bool; 9],
}

impl KeypointSet {
    pub fn all_visible(points: [Vec2; 9]) -> Self {
        Self {
            points,
            mask: [true; 9],
        }
    }

    pub fn kept_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Axis-aligned 2D box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Bbox2D {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            0.5 * (self.left + self.right),
            0.5 * (self.top + self.bottom),
        )
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }
}

/// Pinhole camera: 3x4 projection matrix `P = K [I | t]` with upper
/// triangular intrinsics `K` (`K[2][2] = 1`) and offset `t` in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    p: Mat3x4,
    k: Mat3,
    k_inv: Mat3,
    t: Vec3,
}

impl CameraModel {
    /// Decomposes a full projection matrix into `(K, t)`.
    pub fn from_projection(p: Mat3x4) -> Result<Self, GeometryError> {
        let k: Mat3 = p.fixed_view::<3, 3>(0, 0).into_owned();
        let scale = k[(0, 0)].abs().max(k[(1, 1)].abs()).max(1.0);
        let lower = k[(1, 0)].abs().max(k[(2, 0)].abs()).max(k[(2, 1)].abs());
        if lower > 1e-9 * scale {
            return Err(GeometryError::InvalidProjection(
                "left 3x3 block is not upper triangular".into(),
            ));
        }
        if (k[(2, 2)] - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidProjection(format!(
                "K[2][2] = {} (expected 1)",
                k[(2, 2)]
            )));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(GeometryError::InvalidProjection(format!(
                "focal lengths must be positive, got fx={} fy={}",
                k[(0, 0)],
                k[(1, 1)]
            )));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| GeometryError::InvalidProjection("singular intrinsics".into()))?;
        let t = k_inv * Vector3::new(p[(0, 3)], p[(1, 3)], p[(2, 3)]);
        Ok(Self { p, k, k_inv, t })
    }

    /// A zero-offset camera from bare intrinsics.
    pub fn from_intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        let p = Mat3x4::new(fx, 0.0, cx, 0.0, 0.0, fy, cy, 0.0, 0.0, 0.0, 1.0, 0.0);
        Self::from_projection(p).expect("positive focal lengths form a valid projection")
    }

    pub fn projection(&self) -> &Mat3x4 {
        &self.p
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.k
    }

    pub fn intrinsics_inv(&self) -> &Mat3 {
        &self.k_inv
    }

    /// Camera offset `t` with `P = K [I | t]`.
    pub fn offset(&self) -> Vec3 {
        self.t
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.k[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.k[(1, 2)]
    }

    pub fn skew(&self) -> f64 {
        self.k[(0, 1)]
    }

    /// Depth of a camera-frame point as seen by this camera (`z + t_z`).
    pub fn depth_of(&self, x: &Vec3) -> f64 {
        x.z + self.t.z
    }

    /// Projects a camera-frame point to pixels. The point must be at least
    /// [`MIN_DEPTH`] in front of the camera.
    pub fn project_point(&self, x: &Vec3) -> Result<Vec2, GeometryError> {
        let shifted = x + self.t;
        if shifted.z <= MIN_DEPTH {
            return Err(GeometryError::NonPositiveDepth {
                index: 0,
                depth: shifted.z,
            });
        }
        let h = self.k * shifted;
        Ok(Vec2::new(h.x / h.z, h.y / h.z))
    }

    /// Maps pixels to normalized image coordinates via `K^{-1} (u, v, 1)`.
    pub fn normalize_point(&self, px: Vec2) -> Vec2 {
        let n = self.k_inv * Vector3::new(px.x, px.y, 1.0);
        Vec2::new(n.x, n.y)
    }

    /// Inverse of [`CameraModel::normalize_point`].
    pub fn denormalize_point(&self, n: Vec2) -> Vec2 {
        let p = self.k * Vector3::new(n.x, n.y, 1.0);
        Vec2::new(p.x, p.y)
    }

    /// Horizontal angle of the viewing ray through pixel column `u`.
    pub fn ray_angle(&self, u: f64) -> f64 {
        ((u - self.cx()) / self.fx()).atan2(1.0)
    }
}

/// Local 3D coordinates of the 9 keypoint sources (8 corners + center).
pub fn local_corners(dim: &Dimension3D) -> [Vec3; 9] {
    let half = Vec3::new(dim.l / 2.0, dim.h / 2.0, dim.w / 2.0);
    let mut out = [Vec3::zeros(); 9];
    for (i, s) in CORNER_SIGNS.iter().enumerate() {
        out[i] = Vec3::new(s[0] * half.x, s[1] * half.y, s[2] * half.z);
    }
    out
}

/// Rotation by `theta` around the camera y axis.
pub fn rotate_y(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Projects all 9 box keypoints through the camera. The forward oracle for
/// the position solver.
pub fn project_box(cam: &CameraModel, obj: &ObjectBox3D) -> Result<KeypointSet, GeometryError> {
    let rot = rotate_y(obj.theta);
    let mut points = [Vec2::zeros(); 9];
    for (i, corner) in local_corners(&obj.dim).iter().enumerate() {
        let world = rot * corner + obj.position;
        let depth = cam.depth_of(&world);
        if depth <= MIN_DEPTH {
            return Err(GeometryError::NonPositiveDepth { index: i, depth });
        }
        points[i] = cam.project_point(&world)?;
    }
    Ok(KeypointSet::all_visible(points))
}

/// Normalized coordinates of all 9 keypoints.
pub fn normalize_keypoints(cam: &CameraModel, kps: &KeypointSet) -> [Vec2; 9] {
    let mut out = [Vec2::zeros(); 9];
    for (o, p) in out.iter_mut().zip(kps.points.iter()) {
        *o = cam.normalize_point(*p);
    }
    out
}

/// Global yaw from local orientation and the ray through the projected
/// center keypoint.
pub fn alpha_to_theta(alpha: f64, center_kp: Vec2, cam: &CameraModel) -> f64 {
    normalize_angle(alpha + cam.ray_angle(center_kp.x))
}

/// Local orientation from global yaw; inverse of [`alpha_to_theta`].
pub fn theta_to_alpha(theta: f64, center_kp: Vec2, cam: &CameraModel) -> f64 {
    normalize_angle(theta - cam.ray_angle(center_kp.x))
}

/// Smallest axis-aligned 2D box around the 8 projected corners (the center
/// keypoint is excluded).
pub fn bbox_from_3d(cam: &CameraModel, obj: &ObjectBox3D) -> Result<Bbox2D, GeometryError> {
    let kps = project_box(cam, obj)?;
    let mut left = f64::INFINITY;
    let mut top = f64::INFINITY;
    let mut right = f64::NEG_INFINITY;
    let mut bottom = f64::NEG_INFINITY;
    for p in &kps.points[..8] {
        left = left.min(p.x);
        top = top.min(p.y);
        right = right.max(p.x);
        bottom = bottom.max(p.y);
    }
    Ok(Bbox2D {
        left,
        top,
        right,
        bottom,
    })
}
