//! Property tests for the algebraic invariants: angle normalization,
//! rotation composition, solver round trips and scale consistency, the
//! augmentation group, IoU symmetries and peak-extraction equivariance.

use proptest::prelude::*;

use monobox::augment::{self, make_aug};
use monobox::codec::{self, encode_orientation};
use monobox::eval;
use monobox::geometry::{
    self, normalize_angle, project_box, rotate_y, theta_to_alpha, CameraModel, Dimension3D,
    ObjectBox3D,
};
use monobox::grm;
use monobox::kitti;
use monobox::{Mat3, Vec2, Vec3};

fn test_camera() -> CameraModel {
    CameraModel::from_intrinsics(720.0, 715.0, 640.0, 180.0)
}

prop_compose! {
    fn arb_box()(
        h in 1.0..2.2f64,
        w in 1.0..2.1f64,
        l in 2.5..5.0f64,
        theta in -3.1..3.1f64,
        x_frac in -0.5..0.5f64,
        y_frac in -0.1..0.2f64,
        z in 5.0..55.0f64,
    ) -> ObjectBox3D {
        ObjectBox3D::new(
            Dimension3D::new(h, w, l).unwrap(),
            theta,
            0.0,
            Vec3::new(x_frac * z, y_frac * z, z),
        )
    }
}

proptest! {
    #[test]
    fn normalized_angles_stay_in_range(a in -50.0..50.0f64) {
        let n = normalize_angle(a);
        prop_assert!(n > -std::f64::consts::PI && n <= std::f64::consts::PI);
        // Same angle modulo 2 pi.
        prop_assert!(((n - a) / (2.0 * std::f64::consts::PI)).fract().abs() < 1e-9);
    }

    #[test]
    fn rotations_compose(a in -6.0..6.0f64, b in -6.0..6.0f64) {
        let lhs = rotate_y(a) * rotate_y(b);
        let rhs = rotate_y(a + b);
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn rotations_are_orthogonal(a in -10.0..10.0f64) {
        let r = rotate_y(a);
        prop_assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn solver_round_trips_random_scenes(obj in arb_box()) {
        let cam = test_camera();
        let kps = project_box(&cam, &obj).unwrap();
        let (t, diag) = grm::solve_full(&kps, &obj.dim, obj.theta, &cam).unwrap();
        prop_assert!((t - obj.position).norm() < 1e-6 * obj.position.norm().max(1.0));
        prop_assert!(diag.residual < 1e-9);
    }

    #[test]
    fn solver_scales_with_the_scene(obj in arb_box(), lambda in 0.5..3.0f64) {
        let cam = test_camera();
        let scaled = ObjectBox3D::new(obj.dim, obj.theta, 0.0, obj.position * lambda);
        if let Ok(kps) = project_box(&cam, &scaled) {
            let (t, _) = grm::solve_full(&kps, &scaled.dim, scaled.theta, &cam).unwrap();
            prop_assert!((t - obj.position * lambda).norm() < 1e-6 * (obj.position.norm() * lambda));
        }
    }

    #[test]
    fn least_squares_optimality(obj in arb_box()) {
        let cam = test_camera();
        let kps = project_box(&cam, &obj).unwrap();
        let norm = geometry::normalize_keypoints(&cam, &kps);
        let sys = grm::build_system(&norm, &kps.mask, &obj.dim, obj.theta).unwrap();
        let (t, _) = grm::solve_position(&sys).unwrap();
        let gap = sys.a.transpose() * (&sys.a * nalgebra::DVector::from_column_slice(t.as_slice()) - &sys.b);
        prop_assert!(gap.norm() < 1e-8);
    }

    #[test]
    fn dropout_always_keeps_two(seed in any::<u64>(), p in 0.0..0.999f64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mask = grm::keypoint_dropout(&mut rng, p, 2);
        prop_assert!(mask.iter().filter(|&&m| m).count() >= 2);
    }

    #[test]
    fn augmentation_round_trips(
        obj in arb_box(),
        scale in 0.6..1.4f64,
        dx in -60.0..60.0f64,
        dy in -60.0..60.0f64,
        flip in any::<bool>(),
    ) {
        let cam = test_camera();
        let kps = project_box(&cam, &obj).unwrap();
        let alpha = theta_to_alpha(obj.theta, kps.points[8], &cam);
        let pred = codec::Prediction {
            class_id: 0,
            center: kps.points[8],
            score2d: 1.0,
            keypoints: kps,
            dim: obj.dim,
            alpha,
            orient: encode_orientation(alpha),
            conf3d: 1.0,
            fused_score: 1.0,
            position: Some(obj.position),
        };
        let aug = make_aug(scale, (dx, dy), flip, 1280.0).unwrap();
        let moved = augment::transform(std::slice::from_ref(&pred), &aug);
        let back = &augment::dealign(&moved, &aug, &cam).unwrap()[0];
        prop_assert!((back.center - pred.center).norm() < 1e-6);
        prop_assert!(normalize_angle(back.alpha - pred.alpha).abs() < 1e-9);
        prop_assert!((back.position.unwrap() - obj.position).norm() < 1e-6);
    }

    #[test]
    fn point_maps_invert(
        scale in 0.6..1.4f64,
        dx in -60.0..60.0f64,
        dy in -60.0..60.0f64,
        flip in any::<bool>(),
        px in 0.0..1280.0f64,
        py in 0.0..384.0f64,
    ) {
        let aug = make_aug(scale, (dx, dy), flip, 1280.0).unwrap();
        let p = Vec2::new(px, py);
        prop_assert!((aug.invert_point(aug.apply_point(p)) - p).norm() < 1e-9);
    }

    #[test]
    fn iou_is_symmetric_and_rigid_invariant(
        a in arb_box(),
        b in arb_box(),
        yaw in -3.0..3.0f64,
        shift_x in -5.0..5.0f64,
        shift_z in -5.0..5.0f64,
    ) {
        // Bring the boxes near each other so overlaps are exercised.
        let b = ObjectBox3D::new(
            b.dim,
            b.theta,
            0.0,
            a.position + (b.position - a.position) * 0.05,
        );
        let ab = eval::iou_3d(&a, &b);
        let ba = eval::iou_3d(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);

        // Rigid motion around the vertical axis applied to both boxes.
        let rot = rotate_y(yaw);
        let shift = Vec3::new(shift_x, 0.0, shift_z);
        let moved = |o: &ObjectBox3D| ObjectBox3D::new(
            o.dim,
            normalize_angle(o.theta + yaw),
            0.0,
            rot * o.position + shift,
        );
        let moved_iou = eval::iou_3d(&moved(&a), &moved(&b));
        prop_assert!((ab - moved_iou).abs() < 1e-9, "iou {ab} vs moved {moved_iou}");
    }

    #[test]
    fn peak_extraction_is_translation_equivariant(
        seed in any::<u64>(),
        dy in 0usize..5,
        dx in 0usize..5,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (18usize, 22usize);
        let mut base = codec::HeadMaps::zeros(h, w, 1);
        // Sparse blobs away from the borders so shifting stays in range.
        for _ in 0..4 {
            let y = rng.random_range(5..h - 5);
            let x = rng.random_range(5..w - 5);
            base.set_center(y, x, 0, rng.random_range(0.5..1.0));
        }
        let mut shifted = codec::HeadMaps::zeros(h, w, 1);
        for y in 0..h - dy {
            for x in 0..w - dx {
                shifted.set_center(y + dy, x + dx, 0, base.center_at(y, x, 0));
            }
        }
        let base_peaks: Vec<_> = codec::extract_peaks(&base, 0.4)
            .into_iter()
            .map(|p| (p.cell.0 + dy, p.cell.1 + dx, p.score))
            .collect();
        let shifted_peaks: Vec<_> = codec::extract_peaks(&shifted, 0.4)
            .into_iter()
            .map(|p| (p.cell.0, p.cell.1, p.score))
            .collect();
        prop_assert_eq!(base_peaks, shifted_peaks);
    }

    #[test]
    fn dimension_codec_is_involutive(
        dh in -1.5..1.5f64,
        dw in -1.5..1.5f64,
        dl in -1.5..1.5f64,
    ) {
        let delta = [dh, dw, dl];
        let back = codec::encode_dimension(&codec::decode_dimension(&delta));
        for (a, b) in delta.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_codec_round_trips(alpha in (-std::f64::consts::PI + 1e-6)..std::f64::consts::PI) {
        let back = codec::decode_orientation(&encode_orientation(alpha));
        prop_assert!(normalize_angle(back - alpha).abs() < 1e-9);
    }

    #[test]
    fn label_parse_is_write_stable(
        trunc in 0.0..1.0f64,
        occ in 0i32..4,
        alpha in -3.1..3.1f64,
        l in 0.0..800.0f64,
        t in 0.0..300.0f64,
        bw in 5.0..300.0f64,
        bh in 5.0..150.0f64,
        h in 0.5..3.0f64,
        w in 0.5..3.0f64,
        len in 0.5..6.0f64,
        x in -40.0..40.0f64,
        y in -3.0..5.0f64,
        z in 1.0..80.0f64,
        ry in -3.1..3.1f64,
        score in 0.0..1.0f64,
    ) {
        let obj = kitti::KittiObject {
            object_type: "Car".into(),
            truncated: trunc,
            occluded: occ,
            alpha,
            bbox: monobox::Bbox2D { left: l, top: t, right: l + bw, bottom: t + bh },
            h, w, l: len,
            location: Vec3::new(x, y, z),
            rotation_y: ry,
            score: Some(score),
        };
        let once = kitti::write_results(&[obj]);
        let parsed = kitti::parse_labels(&once).unwrap();
        let twice = kitti::write_results(&parsed);
        prop_assert_eq!(&once, &twice);
        // Values survive to half a formatting unit.
        prop_assert!((parsed[0].location - Vec3::new(x, y, z)).abs().max() <= 0.005 + 1e-12);
    }
}
