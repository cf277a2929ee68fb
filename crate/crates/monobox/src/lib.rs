//! Geometry, loss and evaluation machinery for keypoint-based monocular 3D
//! box estimation.
//!
//! The crate is organised around a single pipeline:
//!
//! 1. **geometry** – pinhole camera model, local box corners, yaw rotation,
//!    perspective projection and the local/global orientation conversion.
//! 2. **grm** – the geometric reasoning module: an overdetermined linear
//!    system built from perspective keypoints whose SVD pseudo-inverse
//!    recovers the 3D position, together with analytic gradients of the
//!    solution with respect to keypoints, dimension and yaw, and the
//!    keypoint-dropout regulariser.
//! 3. **codec** – encode/decode semantics of the detection heads: dimension
//!    residuals, two-bin orientation, heatmap peak extraction and keypoint
//!    offsets, plus a small binary container for head maps.
//! 4. **losses** – supervised training objectives (penalty-reduced focal,
//!    depth-guided L1, multi-bin, position, confidence BCE) and the
//!    semi-supervised consistency loss with its Gaussian ramp-up schedule.
//! 5. **augment** – the affine group unifying flip/shift/scale augmentations
//!    of image coordinates, intrinsics adjustment, and de-augmentation back
//!    to the canonical frame.
//! 6. **kitti** – parsing and writing of KITTI calibration, label and result
//!    files; difficulty classification.
//! 7. **eval** – 2D/BEV/3D IoU, average precision (11- and 40-point) and
//!    average orientation similarity.
//! 8. **synth** – independent oracles: synthetic scene generation, a
//!    Gauss-Newton reprojection solver, finite differences, naive loss
//!    re-implementations and Monte-Carlo IoU. These deliberately share no
//!    code with the modules they check.

pub mod augment;
pub mod codec;
pub mod eval;
pub mod geometry;
pub mod grm;
pub mod kitti;
pub mod losses;
pub mod synth;

/// Image-plane point or offset in pixels.
pub type Vec2 = nalgebra::Vector2<f64>;
/// Camera-frame point or offset in meters.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 real matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// 3x4 projection matrix.
pub type Mat3x4 = nalgebra::Matrix3x4<f64>;

pub use augment::AffineAug;
pub use codec::{HeadMaps, Prediction};
pub use geometry::{Bbox2D, CameraModel, Dimension3D, KeypointSet, ObjectBox3D};
pub use grm::LinearSystem;
pub use kitti::{Difficulty, KittiObject};
