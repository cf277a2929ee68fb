//! Detection metrics: axis-aligned 2D IoU, rotated bird's-eye-view IoU via
//! convex polygon clipping, 3D IoU, interpolated average precision at 11 or
//! 40 recall points, and average orientation similarity.
//!
//! Matching follows the benchmark devkit: detections are visited in
//! descending score order and greedily take the unmatched same-class ground
//! truth with the highest overlap above the threshold. Ground truths outside
//! the evaluated difficulty (and DontCare regions) absorb what would
//! otherwise be false positives.

use crate::geometry::{Bbox2D, ObjectBox3D};
use crate::kitti::{difficulty, gt_to_box, Difficulty, KittiObject};

/// Vertices closer than this are merged before polygon area computation.
const VERTEX_MERGE_EPS: f64 = 1e-9;

/// Which overlap two boxes are compared by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Ap2d,
    ApBev,
    Ap3d,
    Aos,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Ap2d => "ap_2d",
            Metric::ApBev => "ap_bev",
            Metric::Ap3d => "ap_3d",
            Metric::Aos => "aos",
        }
    }
}

/// Number of interpolation points on the recall axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecallSampling {
    /// `{0, 0.1, ..., 1.0}`.
    Eleven,
    /// `{1/40, 2/40, ..., 1.0}`.
    Forty,
}

impl RecallSampling {
    pub fn points(self) -> Vec<f64> {
        match self {
            RecallSampling::Eleven => (0..=10).map(|i| i as f64 / 10.0).collect(),
            RecallSampling::Forty => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }
}

/// Default benchmark IoU threshold for a class/metric pair.
pub fn default_iou_threshold(class: &str, metric: Metric) -> f64 {
    match metric {
        _ if class.eq_ignore_ascii_case("car") => 0.7,
        _ => 0.5,
    }
}

/// Axis-aligned intersection-over-union.
pub fn iou_2d(a: &Bbox2D, b: &Bbox2D) -> f64 {
    let ix = (a.right.min(b.right) - a.left.max(b.left)).max(0.0);
    let iy = (a.bottom.min(b.bottom) - a.top.max(b.top)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A rotated rectangle on the ground plane: center `(x, z)`, size `(l, w)`
/// and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevBox {
    pub x: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub theta: f64,
}

impl BevBox {
    /// Ground-plane footprint of a 3D box.
    pub fn from_box(b: &ObjectBox3D) -> Self {
        Self {
            x: b.position.x,
            z: b.position.z,
            l: b.dim.l,
            w: b.dim.w,
            theta: b.theta,
        }
    }

    /// Footprint of a label row (position x/z are shared between the
    /// bottom-center and center conventions).
    pub fn from_object(o: &KittiObject) -> Self {
        Self {
            x: o.location.x,
            z: o.location.z,
            l: o.l,
            w: o.w,
            theta: o.rotation_y,
        }
    }

    fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.theta.sin_cos();
        let hl = self.l / 2.0;
        let hw = self.w / 2.0;
        // Rotated (xc, zc) with the same yaw convention as the 3D rotation:
        // x' = xc cos + zc sin, z' = -xc sin + zc cos.
        let local = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)];
        let mut out = [(0.0, 0.0); 4];
        for (i, (lx, lz)) in local.iter().enumerate() {
            out[i] = (self.x + lx * c + lz * s, self.z - lx * s + lz * c);
        }
        out
    }

    pub fn area(&self) -> f64 {
        self.l * self.w
    }
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % poly.len()];
        acc += x1 * y2 - x2 * y1;
    }
    acc.abs() / 2.0
}

fn merge_close_vertices(poly: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(poly.len());
    for p in poly {
        let dup = out
            .iter()
            .any(|q| (q.0 - p.0).abs() < VERTEX_MERGE_EPS && (q.1 - p.1).abs() < VERTEX_MERGE_EPS);
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Sutherland–Hodgman clip of `subject` against convex `clip` (counter- or
/// clockwise; orientation is normalized internally).
fn clip_polygon(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    // Ensure counter-clockwise clip orientation for a consistent inside test.
    let mut clip: Vec<(f64, f64)> = clip.to_vec();
    let signed: f64 = (0..clip.len())
        .map(|i| {
            let (x1, y1) = clip[i];
            let (x2, y2) = clip[(i + 1) % clip.len()];
            x1 * y2 - x2 * y1
        })
        .sum();
    if signed < 0.0 {
        clip.reverse();
    }
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            return output;
        }
        let (ax, ay) = clip[i];
        let (bx, by) = clip[(i + 1) % clip.len()];
        let inside = |p: (f64, f64)| (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax) >= 0.0;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                // Edge crossing: intersect segment prev->cur with the line a->b.
                let s_prev = (bx - ax) * (prev.1 - ay) - (by - ay) * (prev.0 - ax);
                let s_cur = (bx - ax) * (cur.1 - ay) - (by - ay) * (cur.0 - ax);
                if (s_prev - s_cur).abs() > 0.0 {
                    let t = s_prev / (s_prev - s_cur);
                    output.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    merge_close_vertices(output)
}

/// Rotated-rectangle intersection over union on the ground plane.
pub fn bev_iou(a: &BevBox, b: &BevBox) -> f64 {
    let inter = polygon_area(&clip_polygon(&a.corners(), &b.corners()));
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// 3D intersection over union: BEV overlap times vertical overlap.
pub fn iou_3d(a: &ObjectBox3D, b: &ObjectBox3D) -> f64 {
    let inter_bev = polygon_area(&clip_polygon(
        &BevBox::from_box(a).corners(),
        &BevBox::from_box(b).corners(),
    ));
    let a_min = a.position.y - a.dim.h / 2.0;
    let a_max = a.position.y + a.dim.h / 2.0;
    let b_min = b.position.y - b.dim.h / 2.0;
    let b_max = b.position.y + b.dim.h / 2.0;
    let overlap = (a_max.min(b_max) - a_min.max(b_min)).max(0.0);
    let inter = inter_bev * overlap;
    let vol_a = a.dim.h * a.dim.w * a.dim.l;
    let vol_b = b.dim.h * b.dim.w * b.dim.l;
    let union = vol_a + vol_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

fn metric_overlap(metric: Metric, det: &KittiObject, gt: &KittiObject) -> f64 {
    match metric {
        Metric::Ap2d | Metric::Aos => iou_2d(&det.bbox, &gt.bbox),
        Metric::ApBev => bev_iou(&BevBox::from_object(det), &BevBox::from_object(gt)),
        Metric::Ap3d => match (gt_to_box(det), gt_to_box(gt)) {
            (Ok(a), Ok(b)) => iou_3d(&a, &b),
            _ => 0.0,
        },
    }
}

/// Scored detection outcomes plus the interpolated precision curve.
#[derive(Debug, Clone)]
pub struct PrCurve {
    /// `(score, is_tp, orientation_similarity)` sorted by descending score.
    pub assignments: Vec<(f64, bool, f64)>,
    /// Count of ground truths valid at the evaluated difficulty.
    pub num_positives: usize,
    /// Sampled recall positions.
    pub recall_points: Vec<f64>,
    /// Interpolated precision (or similarity, for AOS) at each recall point.
    pub precision: Vec<f64>,
}

/// Average precision over per-image detection/ground-truth lists.
#[derive(Debug, Clone)]
pub struct ApResult {
    pub ap: f64,
    pub curve: PrCurve,
}

/// Evaluates one (class, metric, difficulty) cell over a set of images.
pub fn average_precision(
    dets_per_image: &[Vec<KittiObject>],
    gts_per_image: &[Vec<KittiObject>],
    class: &str,
    metric: Metric,
    level: Difficulty,
    threshold: f64,
    sampling: RecallSampling,
) -> ApResult {
    assert_eq!(
        dets_per_image.len(),
        gts_per_image.len(),
        "detection and ground-truth image counts differ"
    );
    let level_rank = level as usize;
    let mut assignments: Vec<(f64, bool, f64)> = Vec::new();
    let mut num_positives = 0usize;

    for (dets, gts) in dets_per_image.iter().zip(gts_per_image.iter()) {
        let class_gts: Vec<&KittiObject> = gts
            .iter()
            .filter(|g| g.object_type.eq_ignore_ascii_case(class))
            .collect();
        let dont_care: Vec<&KittiObject> = gts.iter().filter(|g| g.is_dont_care()).collect();
        // Valid = within this difficulty split; the rest only absorb matches.
        let valid: Vec<bool> = class_gts
            .iter()
            .map(|g| (difficulty(g) as usize) <= level_rank)
            .collect();
        num_positives += valid.iter().filter(|&&v| v).count();

        let mut class_dets: Vec<&KittiObject> = dets
            .iter()
            .filter(|d| d.object_type.eq_ignore_ascii_case(class))
            .collect();
        class_dets.sort_by(|a, b| {
            b.score
                .unwrap_or(0.0)
                .partial_cmp(&a.score.unwrap_or(0.0))
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut taken = vec![false; class_gts.len()];
        for det in class_dets {
            let score = det.score.unwrap_or(0.0);
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in class_gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let ov = metric_overlap(metric, det, gt);
                if ov < threshold {
                    continue;
                }
                // Ties keep the earlier ground-truth index.
                if best.is_none_or(|(_, b)| ov > b) {
                    best = Some((gi, ov));
                }
            }
            match best {
                Some((gi, _)) if valid[gi] => {
                    taken[gi] = true;
                    let sim = orientation_similarity(det.rotation_y, class_gts[gi].rotation_y);
                    assignments.push((score, true, sim));
                }
                Some((gi, _)) => {
                    // Absorbed by an out-of-split ground truth.
                    taken[gi] = true;
                }
                None => {
                    if !absorbed_by_dont_care(det, &dont_care, threshold) {
                        assignments.push((score, false, 0.0));
                    }
                }
            }
        }
    }

    assignments.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let recall_points = sampling.points();
    let use_similarity = metric == Metric::Aos;

    if num_positives == 0 {
        let ap = if assignments.is_empty() { 1.0 } else { 0.0 };
        let precision = vec![ap; recall_points.len()];
        return ApResult {
            ap,
            curve: PrCurve {
                assignments,
                num_positives,
                recall_points,
                precision,
            },
        };
    }

    // Prefix-scan the ranked assignments into (recall, value) steps.
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(assignments.len());
    let mut tp = 0usize;
    let mut sim_sum = 0.0;
    for (rank, &(_, is_tp, sim)) in assignments.iter().enumerate() {
        if is_tp {
            tp += 1;
            sim_sum += sim;
        }
        let recall = tp as f64 / num_positives as f64;
        let denom = (rank + 1) as f64;
        let value = if use_similarity {
            sim_sum / denom
        } else {
            tp as f64 / denom
        };
        steps.push((recall, value));
    }

    let precision: Vec<f64> = recall_points
        .iter()
        .map(|&r| {
            steps
                .iter()
                .filter(|(recall, _)| *recall >= r - 1e-12)
                .map(|&(_, v)| v)
                .fold(0.0, f64::max)
        })
        .collect();
    let ap = precision.iter().sum::<f64>() / precision.len() as f64;
    ApResult {
        ap,
        curve: PrCurve {
            assignments,
            num_positives,
            recall_points,
            precision,
        },
    }
}

/// `(1 + cos(delta yaw)) / 2` on a matched pair.
pub fn orientation_similarity(det_ry: f64, gt_ry: f64) -> f64 {
    (1.0 + (det_ry - gt_ry).cos()) / 2.0
}

fn absorbed_by_dont_care(det: &KittiObject, dont_care: &[&KittiObject], threshold: f64) -> bool {
    let det_area = det.bbox.area();
    if det_area <= 0.0 {
        return false;
    }
    dont_care.iter().any(|dc| {
        let ix = (det.bbox.right.min(dc.bbox.right) - det.bbox.left.max(dc.bbox.left)).max(0.0);
        let iy = (det.bbox.bottom.min(dc.bbox.bottom) - det.bbox.top.max(dc.bbox.top)).max(0.0);
        ix * iy / det_area >= threshold
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dimension3D;
    use crate::Vec3;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn unit_bbox(left: f64, top: f64) -> Bbox2D {
        Bbox2D {
            left,
            top,
            right: left + 1.0,
            bottom: top + 1.0,
        }
    }

    #[test]
    fn iou_2d_cases() {
        let a = unit_bbox(0.0, 0.0);
        assert_relative_eq!(iou_2d(&a, &a), 1.0);
        assert_relative_eq!(iou_2d(&a, &unit_bbox(5.0, 5.0)), 0.0);
        // Half-overlapping unit squares: 0.5 / 1.5.
        assert_relative_eq!(iou_2d(&a, &unit_bbox(0.5, 0.0)), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bev_iou_same_rectangle() {
        let b = BevBox {
            x: 3.0,
            z: 10.0,
            l: 3.9,
            w: 1.6,
            theta: 0.4,
        };
        assert_relative_eq!(bev_iou(&b, &b), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn bev_iou_rotated_square() {
        // Unit squares sharing a center, one rotated 45 degrees: the
        // intersection is the regular octagon of area 2(sqrt(2)-1).
        let a = BevBox {
            x: 0.0,
            z: 0.0,
            l: 1.0,
            w: 1.0,
            theta: 0.0,
        };
        let b = BevBox {
            theta: FRAC_PI_4,
            ..a
        };
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        let expected = inter / (2.0 - inter);
        assert_relative_eq!(bev_iou(&a, &b), expected, epsilon = 1e-9);
    }

    #[test]
    fn bev_iou_disjoint() {
        let a = BevBox {
            x: 0.0,
            z: 0.0,
            l: 1.0,
            w: 1.0,
            theta: 0.3,
        };
        let b = BevBox { x: 5.0, ..a };
        assert_relative_eq!(bev_iou(&a, &b), 0.0);
    }

    fn make_box(x: f64, y: f64, z: f64, theta: f64) -> ObjectBox3D {
        ObjectBox3D::new(
            Dimension3D::new(1.5, 1.6, 3.9).unwrap(),
            theta,
            0.0,
            Vec3::new(x, y, z),
        )
    }

    #[test]
    fn iou_3d_cases() {
        let a = make_box(0.0, 1.0, 10.0, 0.2);
        assert_relative_eq!(iou_3d(&a, &a), 1.0, epsilon = 1e-9);
        let lifted = make_box(0.0, 1.0 + 1.5, 10.0, 0.2);
        assert_relative_eq!(iou_3d(&a, &lifted), 0.0);
        // Symmetry.
        let b = make_box(0.8, 1.2, 10.5, -0.4);
        assert_relative_eq!(iou_3d(&a, &b), iou_3d(&b, &a), epsilon = 1e-12);
    }

    fn det(score: f64, left: f64) -> KittiObject {
        KittiObject {
            object_type: "Car".into(),
            truncated: 0.0,
            occluded: 0,
            alpha: 0.0,
            bbox: Bbox2D {
                left,
                top: 0.0,
                right: left + 50.0,
                bottom: 50.0,
            },
            h: 1.5,
            w: 1.6,
            l: 3.9,
            location: Vec3::new(left / 10.0, 1.5, 10.0),
            rotation_y: 0.0,
            score: Some(score),
        }
    }

    fn gt(left: f64) -> KittiObject {
        KittiObject {
            score: None,
            ..det(0.0, left)
        }
    }

    #[test]
    fn perfect_detections_score_one() {
        let gts = vec![vec![gt(0.0), gt(100.0), gt(200.0)]];
        let dets = vec![vec![det(0.9, 0.0), det(0.8, 100.0), det(0.7, 200.0)]];
        for sampling in [RecallSampling::Eleven, RecallSampling::Forty] {
            let r = average_precision(
                &dets,
                &gts,
                "Car",
                Metric::Ap2d,
                Difficulty::Easy,
                0.7,
                sampling,
            );
            assert_relative_eq!(r.ap, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_detections_scores_zero() {
        let gts = vec![vec![gt(0.0)]];
        let dets = vec![vec![]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Ap2d,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert_relative_eq!(r.ap, 0.0);
    }

    #[test]
    fn false_positive_lowers_ap() {
        let gts = vec![vec![gt(0.0), gt(100.0)]];
        let dets = vec![vec![det(0.9, 0.0), det(0.8, 500.0), det(0.7, 100.0)]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Ap2d,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert!(r.ap < 1.0 && r.ap > 0.5);
    }

    #[test]
    fn dont_care_absorbs_false_positive() {
        let mut dc = gt(500.0);
        dc.object_type = "DontCare".into();
        let gts = vec![vec![gt(0.0), dc]];
        let dets = vec![vec![det(0.9, 0.0), det(0.8, 500.0)]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Ap2d,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert_relative_eq!(r.ap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn harder_gt_absorbs_without_counting() {
        // A Moderate ground truth is not a positive at Easy level, but a
        // detection matching it is not a false positive either.
        let mut hard_gt = gt(100.0);
        hard_gt.occluded = 1;
        hard_gt.bbox.bottom = 30.0; // height 30 -> Moderate
        let gts = vec![vec![gt(0.0), hard_gt]];
        let dets = vec![vec![det(0.9, 0.0), det(0.8, 100.0)]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Ap2d,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert_relative_eq!(r.ap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn top_scoring_true_positive_never_decreases_ap() {
        let gts = vec![vec![gt(0.0), gt(100.0), gt(200.0)]];
        let dets_before = vec![vec![det(0.9, 0.0), det(0.5, 500.0)]];
        let mut extra = det(0.95, 100.0);
        extra.score = Some(0.95);
        let mut dets_after = dets_before.clone();
        dets_after[0].push(extra);
        for sampling in [RecallSampling::Eleven, RecallSampling::Forty] {
            let before = average_precision(
                &dets_before,
                &gts,
                "Car",
                Metric::Ap2d,
                Difficulty::Easy,
                0.7,
                sampling,
            );
            let after = average_precision(
                &dets_after,
                &gts,
                "Car",
                Metric::Ap2d,
                Difficulty::Easy,
                0.7,
                sampling,
            );
            assert!(
                after.ap >= before.ap - 1e-12,
                "{sampling:?}: {} -> {}",
                before.ap,
                after.ap
            );
        }
    }

    #[test]
    fn aos_penalizes_flipped_orientation() {
        let gts = vec![vec![gt(0.0)]];
        let mut flipped = det(0.9, 0.0);
        flipped.rotation_y = std::f64::consts::PI;
        let dets = vec![vec![flipped]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Aos,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert_relative_eq!(r.ap, 0.0, epsilon = 1e-12);

        let dets = vec![vec![det(0.9, 0.0)]];
        let r = average_precision(
            &dets,
            &gts,
            "Car",
            Metric::Aos,
            Difficulty::Easy,
            0.7,
            RecallSampling::Eleven,
        );
        assert_relative_eq!(r.ap, 1.0, epsilon = 1e-12);
    }
}
