//! `monobox consistency`: decode a fixture, simulate its predictions under
//! two augmentations (optionally with keypoint dropout), de-augment both
//! sides and report the per-term consistency loss.

use std::path::PathBuf;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use monobox::augment::transform;
use monobox::codec::{self, decode_objects};
use monobox::grm;
use monobox::losses::{self, consistency_loss};

use crate::augspec::parse_augspec;
use crate::report::write_json;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Fixture directory holding maps.bin and calib.txt.
    #[arg(long)]
    fixture: PathBuf,
    /// First augmentation, e.g. 'scale=1.1,dx=4,flip' or 'identity'.
    #[arg(long, default_value = "identity")]
    aug1: String,
    /// Second augmentation.
    #[arg(long, default_value = "identity")]
    aug2: String,
    /// Apply keypoint dropout to both views with this probability.
    #[arg(long)]
    drop_prob: Option<f64>,
    /// Matching radius between de-augmented centers, in pixels.
    #[arg(long, default_value_t = losses::MATCH_RADIUS)]
    match_radius: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    objects: usize,
    pairs: usize,
    position: f64,
    orientation: f64,
    dimension: f64,
    total: f64,
}

pub fn run(args: Args, seed: u64) -> Result<(), CliError> {
    let calib = super::load_calibration(&args.fixture.join("calib.txt"))?;
    let maps = super::load_head_maps(&args.fixture.join("maps.bin"))?;
    let image_width = (maps.width() * codec::STRIDE) as f64;

    let preds = decode_objects(&maps, &calib.camera, false, codec::PEAK_THRESHOLD);
    let aug1 = parse_augspec(&args.aug1, image_width)?;
    let aug2 = parse_augspec(&args.aug2, image_width)?;
    let mut view1 = transform(&preds, &aug1);
    let mut view2 = transform(&preds, &aug2);

    if let Some(p) = args.drop_prob {
        if !(0.0..1.0).contains(&p) {
            return Err(CliError::Input(format!(
                "drop probability {p} not in [0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for pred in view1.iter_mut().chain(view2.iter_mut()) {
            pred.keypoints.mask = grm::keypoint_dropout(&mut rng, p, grm::MIN_KEYPOINTS);
        }
    }

    let breakdown = consistency_loss(
        &view1,
        &aug1,
        &view2,
        &aug2,
        &calib.camera,
        args.match_radius,
    )
    .map_err(|e| CliError::Degenerate(format!("consistency loss: {e}")))?;

    write_json(
        args.out.as_ref(),
        &Report {
            objects: preds.len(),
            pairs: breakdown.pairs,
            position: breakdown.position,
            orientation: breakdown.orientation,
            dimension: breakdown.dimension,
            total: breakdown.total,
        },
    )
}
