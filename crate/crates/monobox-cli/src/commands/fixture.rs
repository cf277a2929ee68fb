//! `monobox fixture`: write a synthetic scene to disk as a head-map
//! container plus a KITTI calibration file and a ground-truth label sidecar.

use std::path::PathBuf;

use clap::Parser;

use monobox::kitti;
use monobox::synth::{self, SceneSpec};

use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Directory the fixture files are written into (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Number of objects in the scene.
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Gaussian pixel noise added to the encoded keypoints.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Image width in pixels.
    #[arg(long, default_value_t = 1280)]
    width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 384)]
    height: usize,
    /// Number of object classes.
    #[arg(long, default_value_t = 1)]
    classes: usize,
}

pub fn run(args: Args, seed: u64) -> Result<(), CliError> {
    if !args.width.is_multiple_of(4) || !args.height.is_multiple_of(4) {
        return Err(CliError::Input(
            "image width and height must be multiples of the stride (4)".into(),
        ));
    }
    let spec = SceneSpec {
        object_count: args.objects,
        noise_sigma: args.noise,
        image_size: (args.width, args.height),
        classes: args.classes,
        ..SceneSpec::new(seed)
    };
    let scene =
        synth::generate_scene(&spec).map_err(|e| CliError::Input(format!("generation: {e}")))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.out.display())))?;

    let maps_path = args.out.join("maps.bin");
    let file = std::fs::File::create(&maps_path)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", maps_path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    scene
        .maps
        .write_to(&mut writer)
        .map_err(|e| CliError::Input(format!("{}: {e}", maps_path.display())))?;

    let p = scene.camera.projection();
    let mut calib = String::from("P2:");
    for r in 0..3 {
        for c in 0..4 {
            calib.push_str(&format!(" {}", p[(r, c)]));
        }
    }
    calib.push('\n');
    std::fs::write(args.out.join("calib.txt"), calib)
        .map_err(|e| CliError::Input(format!("cannot write calib.txt: {e}")))?;

    let labels = kitti::write_labels(&synth::scene_to_labels(&scene));
    std::fs::write(args.out.join("labels.txt"), labels)
        .map_err(|e| CliError::Input(format!("cannot write labels.txt: {e}")))?;

    eprintln!(
        "fixture: {} objects -> {}",
        scene.objects.len(),
        args.out.display()
    );
    Ok(())
}
