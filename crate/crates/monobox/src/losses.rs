//! Training objectives: penalty-reduced focal loss on the center heatmap,
//! depth-guided L1 keypoint loss, dimension L1, two-bin orientation loss,
//! position L2 through the position solver, confidence BCE, their weighted
//! sum, and the semi-supervised consistency loss with its Gaussian ramp-up.

use thiserror::Error;

use crate::augment::{dealign, AffineAug};
use crate::codec::{in_bin, Prediction, BIN_CENTERS};
use crate::eval::iou_3d;
use crate::geometry::{alpha_to_theta, normalize_angle, CameraModel, KeypointSet, ObjectBox3D};
use crate::grm::{self, GrmError};

/// Probability clamp applied before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Grm(#[from] GrmError),
}

/// Weights of the supervised multi-task sum. Defaults to 1 everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub heatmap: f64,
    pub keypoints: f64,
    pub dimension: f64,
    pub orientation: f64,
    pub position: f64,
    pub confidence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heatmap: 1.0,
            keypoints: 1.0,
            dimension: 1.0,
            orientation: 1.0,
            position: 1.0,
            confidence: 1.0,
        }
    }
}

/// Parameters of the depth guide `g(Z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthGuide {
    /// Slope of the near-range linear segment, per meter.
    pub alpha: f64,
    /// Changeover depth in meters.
    pub a: f64,
}

impl Default for DepthGuide {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            a: 5.0,
        }
    }
}

/// Depth weight `g(Z)`: linear `alpha * Z` below the changeover, then
/// `log10(Z + 1 - a) + alpha * a`. Continuous at `Z = a`.
pub fn depth_weight(z: f64, guide: &DepthGuide) -> f64 {
    if z < guide.a {
        guide.alpha * z
    } else {
        (z + 1.0 - guide.a).log10() + guide.alpha * guide.a
    }
}

/// Penalty-reduced focal loss between a predicted heatmap and a Gaussian
/// ground-truth map:
///
/// ```text
/// -1/N sum { (1-p)^2 log p            where gt = 1
///          { (1-gt)^4 p^2 log(1-p)    elsewhere
/// ```
///
/// with `N` the number of apex cells, floored at one.
pub fn focal_loss(pred: &[f64], gt: &[f64]) -> Result<f64, LossError> {
    if pred.len() != gt.len() {
        return Err(LossError::ShapeMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let mut acc = 0.0;
    let mut apexes = 0usize;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        if g >= 1.0 {
            apexes += 1;
            acc += (1.0 - p).powi(2) * p.ln();
        } else {
            acc += (1.0 - g).powi(4) * p.powi(2) * (1.0 - p).ln();
        }
    }
    Ok(-acc / apexes.max(1) as f64)
}

/// Depth-guided L1 keypoint loss: per object, the L1 distances of all nine
/// keypoints scaled by `g(Z)`, averaged over objects.
pub fn keypoint_loss(
    pred: &[KeypointSet],
    gt: &[KeypointSet],
    gt_depths: &[f64],
    guide: &DepthGuide,
) -> Result<f64, LossError> {
    if pred.len() != gt.len() || pred.len() != gt_depths.len() {
        return Err(LossError::ShapeMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for ((p, g), &z) in pred.iter().zip(gt.iter()).zip(gt_depths.iter()) {
        let weight = depth_weight(z, guide);
        for (pp, gp) in p.points.iter().zip(g.points.iter()) {
            acc += weight * ((pp.x - gp.x).abs() + (pp.y - gp.y).abs());
        }
    }
    Ok(acc / pred.len() as f64)
}

fn softmax_cross_entropy(logit_out: f64, logit_in: f64, target_in: bool) -> f64 {
    let m = logit_out.max(logit_in);
    let log_z = ((logit_out - m).exp() + (logit_in - m).exp()).ln() + m;
    let target_logit = if target_in { logit_in } else { logit_out };
    log_z - target_logit
}

/// Two-bin orientation loss: per bin, softmax cross-entropy on the
/// membership logits, plus an L1 residual term on the `(sin, cos)` embedding
/// for every bin containing the target angle.
pub fn multibin_loss(pred: &[f64; 8], gt_alpha: f64) -> f64 {
    let mut loss = 0.0;
    for (bin, &center) in BIN_CENTERS.iter().enumerate() {
        let base = bin * 4;
        let member = in_bin(gt_alpha, bin);
        loss += softmax_cross_entropy(pred[base], pred[base + 1], member);
        if member {
            let residual = normalize_angle(gt_alpha - center);
            loss += (pred[base + 2] - residual.sin()).abs();
            loss += (pred[base + 3] - residual.cos()).abs();
        }
    }
    loss
}

/// Binary cross-entropy with probability clamping.
pub fn bce(prob: f64, target: f64) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Gaussian ramp-up `exp[-5 (1 - t/100)^2]`, clamped to 1 from `t = 100` on.
pub fn rampup(t: f64) -> f64 {
    let t = t.min(100.0);
    (-5.0 * (1.0 - t / 100.0).powi(2)).exp()
}

/// Semi-supervised objective: supervised term plus ramped unsupervised term.
pub fn semi_supervised_loss(sup: f64, unsup: f64, t: f64) -> f64 {
    sup + rampup(t) * unsup
}

/// One matched (prediction, ground truth) pair of a supervised batch.
#[derive(Debug, Clone)]
pub struct MatchedPair {
    pub prediction: Prediction,
    pub target: ObjectBox3D,
    pub target_keypoints: KeypointSet,
}

/// A supervised batch: heatmaps plus matched object pairs under one camera.
#[derive(Debug, Clone)]
pub struct SupervisedBatch<'a> {
    pub camera: &'a CameraModel,
    pub predicted_heatmap: &'a [f64],
    pub target_heatmap: &'a [f64],
    pub pairs: &'a [MatchedPair],
}

/// Weighted per-term contributions; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub heatmap: f64,
    pub keypoints: f64,
    pub dimension: f64,
    pub orientation: f64,
    pub position: f64,
    pub confidence: f64,
    pub total: f64,
}

/// The supervised multi-task loss. The position term recovers each
/// prediction's position with the linear solver before comparing to the
/// target, and the confidence target is the 3D IoU between the solved box
/// and the ground truth.
pub fn supervised_loss(
    batch: &SupervisedBatch,
    weights: &LossWeights,
    guide: &DepthGuide,
) -> Result<LossBreakdown, LossError> {
    let heatmap = focal_loss(batch.predicted_heatmap, batch.target_heatmap)?;

    let pred_kps: Vec<KeypointSet> = batch.pairs.iter().map(|p| p.prediction.keypoints).collect();
    let gt_kps: Vec<KeypointSet> = batch.pairs.iter().map(|p| p.target_keypoints).collect();
    let depths: Vec<f64> = batch.pairs.iter().map(|p| p.target.position.z).collect();
    let keypoints = keypoint_loss(&pred_kps, &gt_kps, &depths, guide)?;

    let n = batch.pairs.len();
    let mut dimension = 0.0;
    let mut orientation = 0.0;
    let mut position = 0.0;
    let mut confidence = 0.0;
    for pair in batch.pairs {
        let pred = &pair.prediction;
        dimension += (pred.dim.h - pair.target.dim.h).abs()
            + (pred.dim.w - pair.target.dim.w).abs()
            + (pred.dim.l - pair.target.dim.l).abs();
        orientation += multibin_loss(&pred.orient, pair.target.alpha);

        let theta = alpha_to_theta(pred.alpha, pred.keypoints.points[8], batch.camera);
        let (solved, _) = grm::solve_full(&pred.keypoints, &pred.dim, theta, batch.camera)?;
        position += (solved - pair.target.position).norm();

        let solved_box = ObjectBox3D::new(pred.dim, theta, pred.alpha, solved);
        let iou = iou_3d(&solved_box, &pair.target).clamp(0.0, 1.0);
        confidence += bce(pred.conf3d, iou);
    }
    if n > 0 {
        let n = n as f64;
        dimension /= n;
        orientation /= n;
        position /= n;
        confidence /= n;
    }

    let breakdown = LossBreakdown {
        heatmap: weights.heatmap * heatmap,
        keypoints: weights.keypoints * keypoints,
        dimension: weights.dimension * dimension,
        orientation: weights.orientation * orientation,
        position: weights.position * position,
        confidence: weights.confidence * confidence,
        total: 0.0,
    };
    Ok(LossBreakdown {
        total: breakdown.heatmap
            + breakdown.keypoints
            + breakdown.dimension
            + breakdown.orientation
            + breakdown.position
            + breakdown.confidence,
        ..breakdown
    })
}

/// Per-term consistency loss between two de-augmented prediction sets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConsistencyBreakdown {
    /// Mean squared position difference (per component).
    pub position: f64,
    /// Mean squared difference of the `(sin, cos)` orientation embedding.
    pub orientation: f64,
    /// Mean squared dimension difference (per component).
    pub dimension: f64,
    pub total: f64,
    /// Number of matched pairs.
    pub pairs: usize,
}

/// Default matching radius (pixels, full resolution) between de-augmented
/// main centers.
pub const MATCH_RADIUS: f64 = 8.0;

/// Consistency loss between predictions of the same input under two
/// augmentations: both sets are restored to the canonical frame, matched
/// one-to-one by nearest centers, and penalized by the mean squared
/// difference of position, orientation embedding and dimension. Unmatched
/// objects contribute nothing; no pairs means zero loss.
pub fn consistency_loss(
    preds_a: &[Prediction],
    aug_a: &AffineAug,
    preds_b: &[Prediction],
    aug_b: &AffineAug,
    cam: &CameraModel,
    match_radius: f64,
) -> Result<ConsistencyBreakdown, LossError> {
    let a = dealign(preds_a, aug_a, cam)?;
    let b = dealign(preds_b, aug_b, cam)?;

    // Greedy nearest-center matching, one-to-one.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            let d = (pa.center - pb.center).norm();
            if d <= match_radius {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = ConsistencyBreakdown::default();
    for (_, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let pa = &a[i];
        let pb = &b[j];
        let ta = pa.position.expect("dealign always solves positions");
        let tb = pb.position.expect("dealign always solves positions");
        out.position += (ta - tb).norm_squared() / 3.0;
        out.orientation += ((pa.alpha.sin() - pb.alpha.sin()).powi(2)
            + (pa.alpha.cos() - pb.alpha.cos()).powi(2))
            / 2.0;
        out.dimension += ((pa.dim.h - pb.dim.h).powi(2)
            + (pa.dim.w - pb.dim.w).powi(2)
            + (pa.dim.l - pb.dim.l).powi(2))
            / 3.0;
        out.pairs += 1;
    }
    if out.pairs > 0 {
        let n = out.pairs as f64;
        out.position /= n;
        out.orientation /= n;
        out.dimension /= n;
    }
    out.total = out.position + out.orientation + out.dimension;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{make_aug, transform};
    use crate::codec::encode_orientation;
    use crate::geometry::{project_box, theta_to_alpha, Dimension3D};
    use crate::Vec3;
    use approx::assert_relative_eq;

    #[test]
    fn depth_weight_values() {
        let g = DepthGuide::default();
        assert_relative_eq!(depth_weight(5.0, &g), 0.05, epsilon = 1e-12);
        assert_relative_eq!(depth_weight(14.0, &g), 1.05, epsilon = 1e-12);
        assert!((depth_weight(5.001, &g) - depth_weight(4.999, &g)).abs() < 1e-3);
    }

    #[test]
    fn depth_weight_monotone() {
        let g = DepthGuide::default();
        let mut prev = 0.0;
        let mut z = 0.01;
        while z < 80.0 {
            let v = depth_weight(z, &g);
            assert!(v >= prev, "g({z}) = {v} < {prev}");
            prev = v;
            z += 0.01;
        }
    }

    #[test]
    fn focal_loss_perfect_prediction_is_tiny() {
        let gt = vec![0.0, 0.0, 1.0, 0.0];
        let pred = vec![1e-7, 1e-7, 1.0 - 1e-7, 1e-7];
        assert!(focal_loss(&pred, &gt).unwrap() < 1e-6);
        let zeros = vec![0.0; 16];
        let low = vec![1e-7; 16];
        assert!(focal_loss(&low, &zeros).unwrap() < 1e-6);
    }

    #[test]
    fn focal_loss_shape_mismatch() {
        assert!(matches!(
            focal_loss(&[0.5], &[0.5, 0.5]),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn keypoint_loss_hand_cases() {
        let g = DepthGuide::default();
        let mut p = [crate::Vec2::zeros(); 9];
        let gt_kps = KeypointSet::all_visible(p);
        p[0].x = 1.0; // one coordinate off by one pixel
        let pred_kps = KeypointSet::all_visible(p);
        let loss = keypoint_loss(&[pred_kps], &[gt_kps], &[5.0], &g).unwrap();
        assert_relative_eq!(loss, 0.05, epsilon = 1e-12);

        // Equal pixel error at Z=5 vs Z=14 contributes in ratio g(14)/g(5) = 21.
        let near = keypoint_loss(&[pred_kps], &[gt_kps], &[5.0], &g).unwrap();
        let far = keypoint_loss(&[pred_kps], &[gt_kps], &[14.0], &g).unwrap();
        assert_relative_eq!(far / near, 21.0, epsilon = 1e-9);

        assert_relative_eq!(
            keypoint_loss(&[gt_kps], &[gt_kps], &[9.0], &g).unwrap(),
            0.0
        );
        assert_relative_eq!(keypoint_loss(&[], &[], &[], &g).unwrap(), 0.0);
    }

    #[test]
    fn multibin_saturated_encoding_hits_floor() {
        for alpha in [-2.9, -1.2, 0.0, 0.7, 3.0] {
            let enc = encode_orientation(alpha);
            let loss = multibin_loss(&enc, alpha);
            // Only the softmax floor of the saturated logits remains.
            assert!(loss < 1e-3, "alpha={alpha} loss={loss}");
        }
        // Exactly at a bin center with a correct hard assignment the
        // regression term vanishes.
        let enc = encode_orientation(-std::f64::consts::FRAC_PI_2);
        assert_eq!(enc[2], 0.0);
        assert_relative_eq!(enc[3], 1.0);
    }

    #[test]
    fn focal_loss_matches_naive_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(4..64);
            let mut pred = Vec::with_capacity(n);
            let mut gt = Vec::with_capacity(n);
            for _ in 0..n {
                pred.push(rng.random_range(0.0..1.0));
                let g: f64 = rng.random_range(0.0..1.2);
                gt.push(if g > 1.0 { 1.0 } else { g });
            }
            let fast = focal_loss(&pred, &gt).unwrap();
            let naive = crate::synth::naive_focal_loss(&pred, &gt);
            assert!((fast - naive).abs() < 1e-10, "fast {fast} naive {naive}");
        }
    }

    #[test]
    fn multibin_matches_naive_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(32);
        for _ in 0..500 {
            let mut pred = [0.0f64; 8];
            for v in pred.iter_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
            let alpha = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let fast = multibin_loss(&pred, alpha);
            let naive = crate::synth::naive_multibin_loss(&pred, alpha);
            assert!((fast - naive).abs() < 1e-10, "fast {fast} naive {naive}");
        }
    }

    #[test]
    fn rampup_schedule() {
        assert_relative_eq!(rampup(100.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rampup(0.0), (-5.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(rampup(150.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn semi_supervised_combination() {
        assert_relative_eq!(semi_supervised_loss(1.0, 2.0, 100.0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(semi_supervised_loss(0.7, 0.0, 3.0), 0.7, epsilon = 1e-12);
        assert_relative_eq!(
            semi_supervised_loss(1.0, 1.0, 0.0),
            1.0 + (-5.0f64).exp(),
            epsilon = 1e-12
        );
    }

    fn perfect_batch_parts(cam: &CameraModel) -> (Vec<f64>, Vec<f64>, Vec<MatchedPair>) {
        let obj = ObjectBox3D::new(
            Dimension3D::new(1.5, 1.6, 3.9).unwrap(),
            0.4,
            0.0,
            Vec3::new(1.0, 1.2, 12.0),
        );
        let kps = project_box(cam, &obj).unwrap();
        let alpha = theta_to_alpha(obj.theta, kps.points[8], cam);
        let target = ObjectBox3D::new(obj.dim, obj.theta, alpha, obj.position);
        let pred = Prediction {
            class_id: 0,
            center: kps.points[8],
            score2d: 1.0,
            keypoints: kps,
            dim: obj.dim,
            alpha,
            orient: encode_orientation(alpha),
            conf3d: 1.0,
            fused_score: 1.0,
            position: None,
        };
        let heat = vec![0.0, 1.0, 0.0, 0.0];
        (
            heat.clone(),
            heat,
            vec![MatchedPair {
                prediction: pred,
                target,
                target_keypoints: kps,
            }],
        )
    }

    #[test]
    fn supervised_loss_perfect_prediction() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let (pred_heat, gt_heat, pairs) = perfect_batch_parts(&cam);
        // A perfect heatmap still carries the clamped apex.
        let pred_heat: Vec<f64> = pred_heat
            .iter()
            .map(|&v| if v >= 1.0 { 1.0 } else { 0.0 })
            .collect();
        let batch = SupervisedBatch {
            camera: &cam,
            predicted_heatmap: &pred_heat,
            target_heatmap: &gt_heat,
            pairs: &pairs,
        };
        let b = supervised_loss(&batch, &LossWeights::default(), &DepthGuide::default()).unwrap();
        assert!(b.heatmap < 1e-6);
        assert!(b.keypoints < 1e-6);
        assert!(b.dimension < 1e-6);
        assert!(b.position < 1e-6);
        assert!(b.confidence < 1e-6);
        // Orientation keeps its saturated-logit classification floor.
        assert!(b.orientation < 1e-3);
    }

    #[test]
    fn supervised_loss_zero_weights() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let (pred_heat, gt_heat, pairs) = perfect_batch_parts(&cam);
        let batch = SupervisedBatch {
            camera: &cam,
            predicted_heatmap: &pred_heat,
            target_heatmap: &gt_heat,
            pairs: &pairs,
        };
        let zero = LossWeights {
            heatmap: 0.0,
            keypoints: 0.0,
            dimension: 0.0,
            orientation: 0.0,
            position: 0.0,
            confidence: 0.0,
        };
        let b = supervised_loss(&batch, &zero, &DepthGuide::default()).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn supervised_breakdown_sums_to_total() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let (pred_heat, gt_heat, mut pairs) = perfect_batch_parts(&cam);
        pairs[0].prediction.dim.h += 0.2;
        pairs[0].prediction.conf3d = 0.6;
        let batch = SupervisedBatch {
            camera: &cam,
            predicted_heatmap: &pred_heat,
            target_heatmap: &gt_heat,
            pairs: &pairs,
        };
        let w = LossWeights {
            heatmap: 0.5,
            keypoints: 2.0,
            dimension: 1.5,
            orientation: 1.0,
            position: 3.0,
            confidence: 0.25,
        };
        let b = supervised_loss(&batch, &w, &DepthGuide::default()).unwrap();
        let sum = b.heatmap + b.keypoints + b.dimension + b.orientation + b.position + b.confidence;
        assert_relative_eq!(sum, b.total, epsilon = 1e-12);
    }

    fn canonical_predictions(cam: &CameraModel) -> Vec<Prediction> {
        let objs = [
            ObjectBox3D::new(
                Dimension3D::new(1.5, 1.6, 3.9).unwrap(),
                0.4,
                0.0,
                Vec3::new(1.0, 1.2, 12.0),
            ),
            ObjectBox3D::new(
                Dimension3D::new(1.7, 1.7, 4.3).unwrap(),
                -1.1,
                0.0,
                Vec3::new(-4.0, 1.0, 21.0),
            ),
        ];
        objs.iter()
            .map(|o| {
                let kps = project_box(cam, o).unwrap();
                let alpha = theta_to_alpha(o.theta, kps.points[8], cam);
                Prediction {
                    class_id: 0,
                    center: kps.points[8],
                    score2d: 1.0,
                    keypoints: kps,
                    dim: o.dim,
                    alpha,
                    orient: encode_orientation(alpha),
                    conf3d: 1.0,
                    fused_score: 1.0,
                    position: Some(o.position),
                }
            })
            .collect()
    }

    #[test]
    fn consistency_zero_for_identity() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let preds = canonical_predictions(&cam);
        let aug = AffineAug::identity(1280.0);
        let b = consistency_loss(&preds, &aug, &preds, &aug, &cam, MATCH_RADIUS).unwrap();
        assert_eq!(b.pairs, 2);
        assert!(b.total < 1e-12);
    }

    #[test]
    fn consistency_zero_for_exact_transforms() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let preds = canonical_predictions(&cam);
        let aug1 = make_aug(1.0, (10.0, 0.0), false, 1280.0).unwrap();
        let aug2 = AffineAug::identity(1280.0);
        let moved = transform(&preds, &aug1);
        let still = transform(&preds, &aug2);
        let b = consistency_loss(&moved, &aug1, &still, &aug2, &cam, MATCH_RADIUS).unwrap();
        assert_eq!(b.pairs, 2);
        assert!(b.total < 1e-10, "total = {}", b.total);
    }

    #[test]
    fn consistency_dimension_term_is_mse() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let preds = canonical_predictions(&cam)[..1].to_vec();
        let mut nudged = preds.clone();
        nudged[0].dim.h += 0.1;
        let aug = AffineAug::identity(1280.0);
        let b = consistency_loss(&preds, &aug, &nudged, &aug, &cam, MATCH_RADIUS).unwrap();
        assert_eq!(b.pairs, 1);
        assert_relative_eq!(b.dimension, 0.01 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn consistency_is_symmetric() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let preds = canonical_predictions(&cam);
        let mut nudged = preds.clone();
        nudged[0].dim.l += 0.2;
        nudged[1].alpha += 0.05;
        let aug1 = make_aug(1.1, (4.0, -2.0), false, 1280.0).unwrap();
        let aug2 = AffineAug::identity(1280.0);
        let moved = transform(&nudged, &aug1);
        let ab = consistency_loss(&moved, &aug1, &preds, &aug2, &cam, MATCH_RADIUS).unwrap();
        let ba = consistency_loss(&preds, &aug2, &moved, &aug1, &cam, MATCH_RADIUS).unwrap();
        assert_relative_eq!(ab.total, ba.total, epsilon = 1e-12);
        assert_eq!(ab.pairs, ba.pairs);
    }

    #[test]
    fn consistency_no_pairs_is_zero() {
        let cam = CameraModel::from_intrinsics(700.0, 700.0, 640.0, 180.0);
        let preds = canonical_predictions(&cam);
        let aug = AffineAug::identity(1280.0);
        let b = consistency_loss(&preds, &aug, &[], &aug, &cam, MATCH_RADIUS).unwrap();
        assert_eq!(b.pairs, 0);
        assert_eq!(b.total, 0.0);
    }
}
