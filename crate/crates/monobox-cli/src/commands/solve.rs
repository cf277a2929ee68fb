//! `monobox solve`: decode a head-map fixture and recover object positions,
//! reporting the solution, residual, singular values and the keypoint mask
//! used.

use std::path::PathBuf;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use monobox::codec::{self, decode_objects};
use monobox::geometry::alpha_to_theta;
use monobox::grm;

use crate::report::{write_rows, Format};
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// KITTI calibration file (P2 is used).
    #[arg(long)]
    calib: PathBuf,
    /// Head-map container produced by `fixture` (or an exporter).
    #[arg(long)]
    maps: PathBuf,
    /// Keep exactly this many keypoints per object (seeded choice).
    #[arg(long, conflicts_with = "drop_prob", value_parser = clap::value_parser!(u32).range(2..=9))]
    drop_keypoints: Option<u32>,
    /// Drop keypoints independently with this probability (floor of 2 kept).
    #[arg(long)]
    drop_prob: Option<f64>,
    /// Keep only the highest-scoring objects.
    #[arg(long)]
    top_k: Option<usize>,
    /// Peak threshold on the center heatmap.
    #[arg(long, default_value_t = codec::PEAK_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Record {
    object: usize,
    class: usize,
    score2d: f64,
    conf3d: f64,
    fused: f64,
    x: f64,
    y: f64,
    z: f64,
    residual: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    kept: usize,
    mask: String,
}

fn keep_exactly<R: rand::Rng>(rng: &mut R, k: usize) -> [bool; 9] {
    let mut indices = [0usize, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut mask = [false; 9];
    for i in 0..k {
        let j = rng.random_range(i..9);
        indices.swap(i, j);
        mask[indices[i]] = true;
    }
    mask
}

pub fn run(args: Args, seed: u64) -> Result<(), CliError> {
    let calib = super::load_calibration(&args.calib)?;
    let maps = super::load_head_maps(&args.maps)?;
    let mut preds = decode_objects(&maps, &calib.camera, false, args.threshold);
    if let Some(k) = args.top_k {
        preds.truncate(k);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(preds.len());
    for (index, pred) in preds.iter().enumerate() {
        let mut kps = pred.keypoints;
        if let Some(k) = args.drop_keypoints {
            kps.mask = keep_exactly(&mut rng, k as usize);
        } else if let Some(p) = args.drop_prob {
            if !(0.0..1.0).contains(&p) {
                return Err(CliError::Input(format!(
                    "drop probability {p} not in [0, 1)"
                )));
            }
            kps.mask = grm::keypoint_dropout(&mut rng, p, grm::MIN_KEYPOINTS);
        }
        let theta = alpha_to_theta(pred.alpha, kps.points[8], &calib.camera);
        let (t, diag) = grm::solve_full(&kps, &pred.dim, theta, &calib.camera).map_err(|e| {
            CliError::Degenerate(format!("object {index} (class {}): {e}", pred.class_id))
        })?;
        records.push(Record {
            object: index,
            class: pred.class_id,
            score2d: pred.score2d,
            conf3d: pred.conf3d,
            fused: pred.fused_score,
            x: t.x,
            y: t.y,
            z: t.z,
            residual: diag.residual,
            s1: diag.singular_values[0],
            s2: diag.singular_values[1],
            s3: diag.singular_values[2],
            kept: kps.kept_count(),
            mask: kps
                .mask
                .iter()
                .map(|&m| if m { '1' } else { '0' })
                .collect(),
        });
    }

    write_rows(
        args.out.as_ref(),
        args.format,
        &records,
        "object,class,score2d,conf3d,fused,x,y,z,residual,s1,s2,s3,kept,mask",
        |r| {
            format!(
                "{},{},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9},{:.3e},{:.6e},{:.6e},{:.6e},{},{}",
                r.object,
                r.class,
                r.score2d,
                r.conf3d,
                r.fused,
                r.x,
                r.y,
                r.z,
                r.residual,
                r.s1,
                r.s2,
                r.s3,
                r.kept,
                r.mask
            )
        },
    )
}
