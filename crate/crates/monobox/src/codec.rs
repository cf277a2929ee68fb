//! Encode/decode semantics of the detection heads: dimension residuals,
//! two-bin orientation, heatmap peak extraction, keypoint offsets and
//! confidence fusion, plus a small binary container for head maps.
//!
//! All maps live on a stride-4 feature grid. Keypoint offsets are expressed
//! in feature cells relative to the integer peak cell and multiplied by the
//! stride to get pixels.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::geometry::{alpha_to_theta, normalize_angle, CameraModel, Dimension3D, KeypointSet};
use crate::grm;
use crate::{Vec2, Vec3};

/// Feature-map stride relative to the input image.
pub const STRIDE: usize = 4;

/// Default main-center peak threshold.
pub const PEAK_THRESHOLD: f64 = 0.4;

/// Statistical average box size used as the dimension-decoding prior.
pub const DIMENSION_PRIOR: Dimension3D = Dimension3D {
    h: 1.63,
    w: 1.53,
    l: 3.88,
};

/// Half-width of each orientation bin; bins overlap by pi/3 in total.
pub const BIN_HALF_WIDTH: f64 = 2.0 * PI / 3.0;
/// Centers of the two orientation bins.
pub const BIN_CENTERS: [f64; 2] = [-FRAC_PI_2, FRAC_PI_2];
/// Logit magnitude written for the in/out membership when encoding.
const ENCODE_LOGIT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic, not a head-map container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("container header mismatch: {0}")]
    HeaderMismatch(String),
}

/// Per-channel-group output maps of the detection heads on the stride-4
/// grid, stored row-major as `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMaps {
    height: usize,
    width: usize,
    classes: usize,
    /// `h x w x classes`, values in [0, 1].
    pub main_center: Vec<f64>,
    /// `h x w x 18` keypoint offsets in cells, layout `[dx_1, dy_1, ...]`.
    pub kp_offsets: Vec<f64>,
    /// `h x w x 3` dimension residuals `(dh, dw, dl)`.
    pub dim_residual: Vec<f64>,
    /// `h x w x 8` orientation encoding.
    pub orient: Vec<f64>,
    /// `h x w` 3D confidence, values in [0, 1].
    pub conf3d: Vec<f64>,
}

impl HeadMaps {
    pub fn zeros(height: usize, width: usize, classes: usize) -> Self {
        Self {
            height,
            width,
            classes,
            main_center: vec![0.0; height * width * classes],
            kp_offsets: vec![0.0; height * width * 18],
            dim_residual: vec![0.0; height * width * 3],
            orient: vec![0.0; height * width * 8],
            conf3d: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn cell(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    pub fn center_at(&self, y: usize, x: usize, class: usize) -> f64 {
        self.main_center[self.cell(y, x) * self.classes + class]
    }

    pub fn set_center(&mut self, y: usize, x: usize, class: usize, v: f64) {
        let i = self.cell(y, x) * self.classes + class;
        self.main_center[i] = v;
    }

    pub fn offsets_at(&self, y: usize, x: usize) -> &[f64] {
        let i = self.cell(y, x) * 18;
        &self.kp_offsets[i..i + 18]
    }

    pub fn offsets_at_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = self.cell(y, x) * 18;
        &mut self.kp_offsets[i..i + 18]
    }

    pub fn dim_at(&self, y: usize, x: usize) -> [f64; 3] {
        let i = self.cell(y, x) * 3;
        [
            self.dim_residual[i],
            self.dim_residual[i + 1],
            self.dim_residual[i + 2],
        ]
    }

    pub fn set_dim(&mut self, y: usize, x: usize, delta: [f64; 3]) {
        let i = self.cell(y, x) * 3;
        self.dim_residual[i..i + 3].copy_from_slice(&delta);
    }

    pub fn orient_at(&self, y: usize, x: usize) -> [f64; 8] {
        let i = self.cell(y, x) * 8;
        let mut out = [0.0; 8];
        out.copy_from_slice(&self.orient[i..i + 8]);
        out
    }

    pub fn set_orient(&mut self, y: usize, x: usize, enc: [f64; 8]) {
        let i = self.cell(y, x) * 8;
        self.orient[i..i + 8].copy_from_slice(&enc);
    }

    pub fn conf_at(&self, y: usize, x: usize) -> f64 {
        self.conf3d[self.cell(y, x)]
    }

    pub fn set_conf(&mut self, y: usize, x: usize, v: f64) {
        let i = self.cell(y, x);
        self.conf3d[i] = v;
    }
}

// --- binary container ----------------------------------------------------
//
// Layout (all integers little-endian):
//   magic   b"HMAP"
//   version u32 (= 1)
//   height  u32, width u32 (feature cells)
//   heads   u32 (= 5), then per head: name_len u8, name bytes, channels u32
//   payload f64 LE per head, row-major (y, x, channel), in header order.

const MAGIC: &[u8; 4] = b"HMAP";
const VERSION: u32 = 1;
const HEAD_NAMES: [&str; 5] = [
    "main_center",
    "kp_offsets",
    "dim_residual",
    "orient",
    "conf3d",
];

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl HeadMaps {
    /// Serializes into the flat binary container.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CodecError> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u32(w, self.height as u32)?;
        write_u32(w, self.width as u32)?;
        write_u32(w, HEAD_NAMES.len() as u32)?;
        let channels = [self.classes, 18, 3, 8, 1];
        for (name, ch) in HEAD_NAMES.iter().zip(channels) {
            w.write_all(&[name.len() as u8])?;
            w.write_all(name.as_bytes())?;
            write_u32(w, ch as u32)?;
        }
        write_f64s(w, &self.main_center)?;
        write_f64s(w, &self.kp_offsets)?;
        write_f64s(w, &self.dim_residual)?;
        write_f64s(w, &self.orient)?;
        write_f64s(w, &self.conf3d)?;
        Ok(())
    }

    /// Reads a container written by [`HeadMaps::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CodecError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let height = read_u32(r)? as usize;
        let width = read_u32(r)? as usize;
        let heads = read_u32(r)? as usize;
        if heads != HEAD_NAMES.len() {
            return Err(CodecError::HeaderMismatch(format!(
                "expected {} heads, got {heads}",
                HEAD_NAMES.len()
            )));
        }
        let mut channels = [0usize; 5];
        for (i, expected) in HEAD_NAMES.iter().enumerate() {
            let mut len = [0u8; 1];
            r.read_exact(&mut len)?;
            let mut name = vec![0u8; len[0] as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8_lossy(&name).into_owned();
            if name != *expected {
                return Err(CodecError::HeaderMismatch(format!(
                    "head {i} is '{name}', expected '{expected}'"
                )));
            }
            channels[i] = read_u32(r)? as usize;
        }
        for (i, want) in [(1usize, 18usize), (2, 3), (3, 8), (4, 1)] {
            if channels[i] != want {
                return Err(CodecError::HeaderMismatch(format!(
                    "head '{}' has {} channels, expected {want}",
                    HEAD_NAMES[i], channels[i]
                )));
            }
        }
        let classes = channels[0];
        let cells = height * width;
        Ok(Self {
            height,
            width,
            classes,
            main_center: read_f64s(r, cells * classes)?,
            kp_offsets: read_f64s(r, cells * 18)?,
            dim_residual: read_f64s(r, cells * 3)?,
            orient: read_f64s(r, cells * 8)?,
            conf3d: read_f64s(r, cells)?,
        })
    }
}

// --- head codecs ----------------------------------------------------------

/// Restores box dimensions from head residuals: `prior * exp(delta)`
/// componentwise.
pub fn decode_dimension(delta: &[f64; 3]) -> Dimension3D {
    Dimension3D {
        h: DIMENSION_PRIOR.h * delta[0].exp(),
        w: DIMENSION_PRIOR.w * delta[1].exp(),
        l: DIMENSION_PRIOR.l * delta[2].exp(),
    }
}

/// Inverse of [`decode_dimension`]: `ln(dim / prior)` componentwise.
pub fn encode_dimension(dim: &Dimension3D) -> [f64; 3] {
    [
        (dim.h / DIMENSION_PRIOR.h).ln(),
        (dim.w / DIMENSION_PRIOR.w).ln(),
        (dim.l / DIMENSION_PRIOR.l).ln(),
    ]
}

/// Whether `alpha` falls inside orientation bin `bin` (bins overlap).
pub fn in_bin(alpha: f64, bin: usize) -> bool {
    normalize_angle(alpha - BIN_CENTERS[bin]).abs() <= BIN_HALF_WIDTH
}

/// Encodes a local orientation into the two-bin layout
/// `[l0, l1, sin, cos, l0, l1, sin, cos]` where `(l0, l1)` are
/// (out-of-bin, in-bin) membership logits and `(sin, cos)` embed the
/// residual to the bin center.
pub fn encode_orientation(alpha: f64) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (bin, &center) in BIN_CENTERS.iter().enumerate() {
        let base = bin * 4;
        if in_bin(alpha, bin) {
            let residual = normalize_angle(alpha - center);
            out[base] = -ENCODE_LOGIT;
            out[base + 1] = ENCODE_LOGIT;
            out[base + 2] = residual.sin();
            out[base + 3] = residual.cos();
        } else {
            out[base] = ENCODE_LOGIT;
            out[base + 1] = -ENCODE_LOGIT;
        }
    }
    out
}

fn bin_score(enc: &[f64; 8], bin: usize) -> f64 {
    let base = bin * 4;
    let m = enc[base].max(enc[base + 1]);
    let e0 = (enc[base] - m).exp();
    let e1 = (enc[base + 1] - m).exp();
    e1 / (e0 + e1)
}

/// Decodes the two-bin layout back to an orientation in `(-pi, pi]`.
pub fn decode_orientation(enc: &[f64; 8]) -> f64 {
    let bin = if bin_score(enc, 0) >= bin_score(enc, 1) {
        0
    } else {
        1
    };
    let base = bin * 4;
    normalize_angle(BIN_CENTERS[bin] + enc[base + 2].atan2(enc[base + 3]))
}

/// A local maximum of the main-center heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub class_id: usize,
    /// `(y, x)` feature cell.
    pub cell: (usize, usize),
    pub score: f64,
}

/// Finds cells that equal the maximum of their 3x3 neighborhood and clear
/// the threshold. Ties within a window keep the lexicographically smallest
/// cell. Peaks come out sorted by descending score.
pub fn extract_peaks(maps: &HeadMaps, threshold: f64) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for class in 0..maps.classes() {
        for y in 0..maps.height() {
            for x in 0..maps.width() {
                let v = maps.center_at(y, x, class);
                if v < threshold {
                    continue;
                }
                let mut is_peak = true;
                'scan: for ny in y.saturating_sub(1)..=(y + 1).min(maps.height() - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(maps.width() - 1) {
                        if (ny, nx) == (y, x) {
                            continue;
                        }
                        let nv = maps.center_at(ny, nx, class);
                        if nv > v || (nv == v && (ny, nx) < (y, x)) {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak {
                        class_id: class,
                        cell: (y, x),
                        score: v,
                    });
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.class_id, a.cell).cmp(&(b.class_id, b.cell)))
    });
    peaks
}

/// One decoded object: every per-object head output, the fused confidence
/// and, when the position solver ran, the recovered position.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_id: usize,
    /// Main-center estimate in pixels (cell center).
    pub center: Vec2,
    pub score2d: f64,
    pub keypoints: KeypointSet,
    pub dim: Dimension3D,
    /// Local orientation decoded from `orient`.
    pub alpha: f64,
    /// Raw two-bin orientation encoding.
    pub orient: [f64; 8],
    pub conf3d: f64,
    /// `score2d * conf3d`.
    pub fused_score: f64,
    pub position: Option<Vec3>,
}

/// Decodes every peak into a [`Prediction`]. With `run_grm` the position is
/// recovered per object; objects whose geometry is degenerate keep
/// `position = None` rather than failing the whole decode.
pub fn decode_objects(
    maps: &HeadMaps,
    cam: &CameraModel,
    run_grm: bool,
    threshold: f64,
) -> Vec<Prediction> {
    let mut out = Vec::new();
    for peak in extract_peaks(maps, threshold) {
        let (y, x) = peak.cell;
        let offsets = maps.offsets_at(y, x);
        let mut points = [Vec2::zeros(); 9];
        for (i, p) in points.iter_mut().enumerate() {
            p.x = (x as f64 + offsets[2 * i]) * STRIDE as f64;
            p.y = (y as f64 + offsets[2 * i + 1]) * STRIDE as f64;
        }
        let keypoints = KeypointSet::all_visible(points);
        let dim = decode_dimension(&maps.dim_at(y, x));
        let orient = maps.orient_at(y, x);
        let alpha = decode_orientation(&orient);
        let conf3d = maps.conf_at(y, x);
        let position = if run_grm {
            let theta = alpha_to_theta(alpha, points[8], cam);
            grm::solve_full(&keypoints, &dim, theta, cam)
                .ok()
                .map(|(t, _)| t)
        } else {
            None
        };
        out.push(Prediction {
            class_id: peak.class_id,
            center: Vec2::new(
                (x as f64 + 0.5) * STRIDE as f64,
                (y as f64 + 0.5) * STRIDE as f64,
            ),
            score2d: peak.score,
            keypoints,
            dim,
            alpha,
            orient,
            conf3d,
            fused_score: peak.score * conf3d,
            position,
        });
    }
    out
}

/// Ground-truth content rendered into head maps by the synthetic fixture
/// generator.
#[derive(Debug, Clone)]
pub struct EncodeTarget {
    pub class_id: usize,
    /// Main center (2D box center) in pixels.
    pub center: Vec2,
    pub keypoints: KeypointSet,
    pub dim: Dimension3D,
    pub alpha: f64,
    pub conf3d: f64,
    /// Gaussian splat radius in cells.
    pub sigma: f64,
}

/// Renders targets into head maps: a Gaussian peak (apex 1) at each center
/// cell, with exact offsets and residuals written at that cell. Overlapping
/// Gaussians combine by max.
pub fn encode_objects(
    targets: &[EncodeTarget],
    height: usize,
    width: usize,
    classes: usize,
) -> HeadMaps {
    let mut maps = HeadMaps::zeros(height, width, classes);
    for t in targets {
        let cx = ((t.center.x / STRIDE as f64).floor() as isize).clamp(0, width as isize - 1);
        let cy = ((t.center.y / STRIDE as f64).floor() as isize).clamp(0, height as isize - 1);
        let sigma = t.sigma.max(0.5);
        let reach = (3.0 * sigma).ceil() as isize;
        for y in (cy - reach).max(0)..=(cy + reach).min(height as isize - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(width as isize - 1) {
                let d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) as f64;
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                let cur = maps.center_at(y as usize, x as usize, t.class_id);
                if v > cur {
                    maps.set_center(y as usize, x as usize, t.class_id, v);
                }
            }
        }
        let (ux, uy) = (cx as usize, cy as usize);
        let offsets = maps.offsets_at_mut(uy, ux);
        for (i, p) in t.keypoints.points.iter().enumerate() {
            offsets[2 * i] = p.x / STRIDE as f64 - cx as f64;
            offsets[2 * i + 1] = p.y / STRIDE as f64 - cy as f64;
        }
        maps.set_dim(uy, ux, encode_dimension(&t.dim));
        maps.set_orient(uy, ux, encode_orientation(t.alpha));
        maps.set_conf(uy, ux, t.conf3d);
    }
    maps
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimension_prior_round_trip() {
        let d = decode_dimension(&[0.0, 0.0, 0.0]);
        assert_eq!(d, DIMENSION_PRIOR);
        let d = decode_dimension(&[2f64.ln(), 0.0, 0.0]);
        assert_relative_eq!(d.h, 3.26, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let delta = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let back = encode_dimension(&decode_dimension(&delta));
            for (a, b) in delta.iter().zip(back.iter()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn orientation_bin_center_is_fixed_point() {
        let enc = encode_orientation(-FRAC_PI_2);
        assert_eq!(enc[2], 0.0);
        assert_relative_eq!(enc[3], 1.0, epsilon = 1e-15);
        assert_relative_eq!(decode_orientation(&enc), -FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn orientation_round_trip_sweep() {
        let n = 4096;
        for i in 0..n {
            let alpha = -PI + (i as f64 + 0.5) / n as f64 * 2.0 * PI;
            let back = decode_orientation(&encode_orientation(alpha));
            assert!(
                normalize_angle(back - alpha).abs() < 1e-9,
                "alpha={alpha} back={back}"
            );
        }
    }

    #[test]
    fn orientation_overlap_region_consistent() {
        // alpha = 0 lies in both bins; either bin decodes to 0.
        let enc = encode_orientation(0.0);
        for (bin, &center) in BIN_CENTERS.iter().enumerate() {
            let base = bin * 4;
            assert!(enc[base + 1] > enc[base], "bin {bin} should be in");
            let alpha = normalize_angle(center + enc[base + 2].atan2(enc[base + 3]));
            assert_relative_eq!(alpha, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_blob_yields_one_peak() {
        let mut maps = HeadMaps::zeros(24, 32, 1);
        for y in 0..24 {
            for x in 0..32 {
                let d2 = ((x as f64 - 11.0).powi(2) + (y as f64 - 7.0).powi(2)) / 8.0;
                maps.set_center(y, x, 0, 0.9 * (-d2).exp());
            }
        }
        let peaks = extract_peaks(&maps, 0.4);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, (7, 11));
        assert_relative_eq!(peaks[0].score, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn below_threshold_map_has_no_peaks() {
        let mut maps = HeadMaps::zeros(8, 8, 1);
        for v in maps.main_center.iter_mut() {
            *v = 0.39;
        }
        assert!(extract_peaks(&maps, 0.4).is_empty());
    }

    #[test]
    fn two_blobs_sorted_by_score() {
        let mut maps = HeadMaps::zeros(16, 16, 1);
        maps.set_center(4, 4, 0, 0.6);
        maps.set_center(4, 9, 0, 0.8);
        let peaks = extract_peaks(&maps, 0.4);
        assert_eq!(peaks.len(), 2);
        assert_eq!(peaks[0].cell, (4, 9));
        assert_eq!(peaks[1].cell, (4, 4));
    }

    #[test]
    fn plateau_keeps_lexicographically_smallest() {
        let mut maps = HeadMaps::zeros(8, 8, 1);
        maps.set_center(3, 3, 0, 0.7);
        maps.set_center(3, 4, 0, 0.7);
        let peaks = extract_peaks(&maps, 0.4);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].cell, (3, 3));
    }

    #[test]
    fn container_round_trip() {
        let mut maps = HeadMaps::zeros(6, 9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for v in maps
            .main_center
            .iter_mut()
            .chain(maps.kp_offsets.iter_mut())
            .chain(maps.dim_residual.iter_mut())
            .chain(maps.orient.iter_mut())
            .chain(maps.conf3d.iter_mut())
        {
            *v = rng.random_range(-2.0..2.0);
        }
        let mut buf = Vec::new();
        maps.write_to(&mut buf).unwrap();
        let back = HeadMaps::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(maps, back);
    }

    #[test]
    fn container_rejects_garbage() {
        let buf = b"NOPExxxxxxxxxxxxxxx".to_vec();
        assert!(matches!(
            HeadMaps::read_from(&mut buf.as_slice()),
            Err(CodecError::BadMagic)
        ));
    }

    #[test]
    fn fused_score_is_product() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 64.0, 64.0);
        let mut maps = HeadMaps::zeros(32, 32, 1);
        maps.set_center(16, 16, 0, 0.5);
        maps.set_conf(16, 16, 0.5);
        let preds = decode_objects(&maps, &cam, false, 0.4);
        assert_eq!(preds.len(), 1);
        assert_relative_eq!(preds[0].fused_score, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn empty_heatmap_decodes_to_nothing() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 64.0, 64.0);
        let maps = HeadMaps::zeros(16, 16, 2);
        assert!(decode_objects(&maps, &cam, true, 0.4).is_empty());
    }
}
