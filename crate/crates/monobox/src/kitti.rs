//! Parsing and writing of KITTI calibration, label and result files, plus
//! the benchmark's difficulty classification.
//!
//! Label lines carry 15 whitespace-separated fields (16 with a trailing
//! detection score):
//!
//! ```text
//! type truncated occluded alpha left top right bottom h w l x y z ry [score]
//! ```
//!
//! Written reals use fixed two-decimal formatting, so writing is idempotent
//! at the text level and round trips preserve values to 0.005.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{Bbox2D, CameraModel, Dimension3D, GeometryError, ObjectBox3D};
use crate::{Mat3x4, Vec3};

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("missing key '{key}'")]
    MissingKey { key: String },
    #[error("line {line}, column {column}: malformed number '{token}'")]
    MalformedNumber {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}: expected 12 values for key '{key}', got {got}")]
    BadValueCount {
        line: usize,
        key: String,
        got: usize,
    },
    #[error("line {line}: expected 15 or 16 fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("object is not convertible to a 3D box: {0}")]
    InvalidObject(#[from] GeometryError),
}

/// One row of a label or result file.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiObject {
    pub object_type: String,
    /// Fraction of the object leaving image boundaries, in [0, 1].
    pub truncated: f64,
    /// 0 = fully visible .. 3 = unknown; -1 on DontCare rows.
    pub occluded: i32,
    /// Observation angle in radians.
    pub alpha: f64,
    pub bbox: Bbox2D,
    /// Height, width, length in meters (sentinels on DontCare rows).
    pub h: f64,
    pub w: f64,
    pub l: f64,
    /// Bottom-center of the box in camera coordinates.
    pub location: Vec3,
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiObject {
    pub fn is_dont_care(&self) -> bool {
        self.object_type == "DontCare"
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox.height()
    }
}

/// Benchmark difficulty split of a ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    /// Outside every split; never counted as a positive.
    Ignored,
}

impl Difficulty {
    pub const EVAL_LEVELS: [Difficulty; 3] =
        [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn label(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        }
    }
}

/// Devkit difficulty thresholds: minimum pixel height, maximum occlusion
/// level and maximum truncation per split.
pub fn difficulty(obj: &KittiObject) -> Difficulty {
    if obj.is_dont_care() {
        return Difficulty::Ignored;
    }
    let height = obj.bbox_height();
    if height >= 40.0 && obj.occluded == 0 && obj.truncated <= 0.15 {
        Difficulty::Easy
    } else if height >= 25.0 && (0..=1).contains(&obj.occluded) && obj.truncated <= 0.30 {
        Difficulty::Moderate
    } else if height >= 25.0 && (0..=2).contains(&obj.occluded) && obj.truncated <= 0.50 {
        Difficulty::Hard
    } else {
        Difficulty::Ignored
    }
}

/// All projection matrices of a calibration file, with the camera-2 model
/// decomposed and ready to use.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// The rectified left color camera (P2).
    pub camera: CameraModel,
    /// Every `P*` entry found, keyed by name.
    pub projections: BTreeMap<String, Mat3x4>,
}

/// Parses a KITTI calibration file. `P2` must be present; every other `P*`
/// key is kept as-is.
pub fn parse_calib(text: &str) -> Result<Calibration, KittiError> {
    let mut projections = BTreeMap::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some(colon) = trimmed.find(':') else {
            continue;
        };
        let key = trimmed[..colon].trim();
        if !key.starts_with('P') {
            continue;
        }
        let rest = &trimmed[colon + 1..];
        let mut values = [0.0f64; 12];
        let mut count = 0;
        for token in rest.split_whitespace() {
            if count >= 12 {
                count += 1;
                continue;
            }
            values[count] = parse_number(token, line, line_no)?;
            count += 1;
        }
        if count != 12 {
            return Err(KittiError::BadValueCount {
                line: line_no,
                key: key.to_string(),
                got: count,
            });
        }
        projections.insert(key.to_string(), Mat3x4::from_row_slice(&values));
    }
    let p2 = projections
        .get("P2")
        .ok_or_else(|| KittiError::MissingKey {
            key: "P2".to_string(),
        })?;
    let camera = CameraModel::from_projection(*p2)?;
    Ok(Calibration {
        camera,
        projections,
    })
}

fn parse_number(token: &str, line: &str, line_no: usize) -> Result<f64, KittiError> {
    token.parse::<f64>().map_err(|_| {
        let column = line.find(token).map(|p| p + 1).unwrap_or(0);
        KittiError::MalformedNumber {
            line: line_no,
            column,
            token: token.to_string(),
        }
    })
}

/// Parses a label or result file; each line may carry 15 or 16 fields.
pub fn parse_labels(text: &str) -> Result<Vec<KittiObject>, KittiError> {
    let mut out = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(KittiError::FieldCount {
                line: line_no,
                got: fields.len(),
            });
        }
        let mut nums = Vec::with_capacity(15);
        for token in &fields[1..] {
            nums.push(parse_number(token, line, line_no)?);
        }
        out.push(KittiObject {
            object_type: fields[0].to_string(),
            truncated: nums[0],
            occluded: nums[1] as i32,
            alpha: nums[2],
            bbox: Bbox2D {
                left: nums[3],
                top: nums[4],
                right: nums[5],
                bottom: nums[6],
            },
            h: nums[7],
            w: nums[8],
            l: nums[9],
            location: Vec3::new(nums[10], nums[11], nums[12]),
            rotation_y: nums[13],
            score: nums.get(14).copied(),
        });
    }
    Ok(out)
}

fn write_object(s: &mut String, obj: &KittiObject, score: Option<f64>) {
    let _ = write!(
        s,
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        obj.object_type,
        obj.truncated,
        obj.occluded,
        obj.alpha,
        obj.bbox.left,
        obj.bbox.top,
        obj.bbox.right,
        obj.bbox.bottom,
        obj.h,
        obj.w,
        obj.l,
        obj.location.x,
        obj.location.y,
        obj.location.z,
        obj.rotation_y,
    );
    if let Some(score) = score {
        let _ = write!(s, " {:.2}", score);
    }
    s.push('\n');
}

/// Writes 16-field detection rows. Objects without a score are written with
/// score 1.00.
pub fn write_results(objects: &[KittiObject]) -> String {
    let mut s = String::new();
    for obj in objects {
        write_object(&mut s, obj, Some(obj.score.unwrap_or(1.0)));
    }
    s
}

/// Writes 15-field ground-truth rows (no score).
pub fn write_labels(objects: &[KittiObject]) -> String {
    let mut s = String::new();
    for obj in objects {
        write_object(&mut s, obj, None);
    }
    s
}

/// Converts a label row into the center-anchored box the solvers use: the
/// bottom-center location is lifted by half the height.
pub fn gt_to_box(obj: &KittiObject) -> Result<ObjectBox3D, KittiError> {
    let dim = Dimension3D::new(obj.h, obj.w, obj.l)?;
    Ok(ObjectBox3D::new(
        dim,
        obj.rotation_y,
        obj.alpha,
        obj.location + Vec3::new(0.0, -obj.h / 2.0, 0.0),
    ))
}

/// Inverse of [`gt_to_box`]: produces a label row for a solved box. The 2D
/// box must be supplied by the caller (typically the projected envelope).
pub fn box_to_gt(b: &ObjectBox3D, object_type: &str, bbox: Bbox2D) -> KittiObject {
    KittiObject {
        object_type: object_type.to_string(),
        truncated: 0.0,
        occluded: 0,
        alpha: b.alpha,
        bbox,
        h: b.dim.h,
        w: b.dim.w,
        l: b.dim.l,
        location: b.position + Vec3::new(0.0, b.dim.h / 2.0, 0.0),
        rotation_y: b.theta,
        score: None,
    }
}
