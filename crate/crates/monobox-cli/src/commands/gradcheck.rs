//! `monobox gradcheck`: compare the analytic position gradients against
//! central finite differences on random scenes and masks; exit 1 when any
//! trial exceeds the tolerance.

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use monobox::geometry::Dimension3D;
use monobox::grm;
use monobox::synth::{self, SceneSpec};
use monobox::Vec2;

use crate::CliError;

/// Tolerance on the per-entry relative error.
const TOLERANCE: f64 = 1e-4;
/// Finite-difference step.
const STEP: f64 = 1e-5;
/// Entries below this magnitude are compared against it instead of
/// relatively; smaller values sit at the finite-difference noise floor.
const FLOOR: f64 = 1e-2;

#[derive(Parser)]
pub struct Args {
    /// Number of random scenes to check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

pub fn run(args: Args, seed: u64) -> Result<(), CliError> {
    if args.trials == 0 {
        eprintln!("warning: 0 trials requested; nothing was checked");
        println!("gradcheck: PASS (vacuous)");
        return Ok(());
    }
    let mut worst_overall = 0.0f64;
    let mut failures = 0usize;
    println!("trial,max_rel_error");
    for trial in 0..args.trials {
        let trial_seed = seed.wrapping_add(trial as u64);
        let max_err = trial_max_error(trial_seed)?;
        println!("{trial},{max_err:.3e}");
        worst_overall = worst_overall.max(max_err);
        if max_err > TOLERANCE {
            failures += 1;
        }
    }
    println!(
        "gradcheck: {} ({} trials, worst {worst_overall:.3e}, tolerance {TOLERANCE:.0e})",
        if failures == 0 { "PASS" } else { "FAIL" },
        args.trials
    );
    if failures > 0 {
        return Err(CliError::Check(format!(
            "{failures} of {} trials exceeded {TOLERANCE:.0e}",
            args.trials
        )));
    }
    Ok(())
}

/// Worst relative error over all mask sizes 2..=9 for one scene.
fn trial_max_error(scene_seed: u64) -> Result<f64, CliError> {
    let scene = synth::generate_scene(&SceneSpec::new(scene_seed))
        .map_err(|e| CliError::Input(format!("scene generation: {e}")))?;
    let o = &scene.objects[0];
    let cam = &scene.camera;
    let mut order = [0usize, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed ^ 0xfeed);
    for i in 0..9 {
        let j = rng.random_range(i..9);
        order.swap(i, j);
    }
    let mut worst = 0.0f64;
    for k in 2..=9usize {
        let mut kps = o.exact_keypoints;
        kps.mask = [false; 9];
        for &i in &order[..k] {
            kps.mask[i] = true;
        }
        let jac = match grm::position_jacobian(&kps, &o.gt.dim, o.gt.theta, cam) {
            Ok(jac) => jac,
            Err(grm::GrmError::DegenerateSystem { .. }) => continue,
            Err(e) => return Err(CliError::Degenerate(format!("seed {scene_seed}: {e}"))),
        };

        let mut x = [0.0f64; 22];
        for (i, p) in kps.points.iter().enumerate() {
            x[2 * i] = p.x;
            x[2 * i + 1] = p.y;
        }
        x[18] = o.gt.dim.h;
        x[19] = o.gt.dim.w;
        x[20] = o.gt.dim.l;
        x[21] = o.gt.theta;
        let mask = kps.mask;
        let solve = |x: &[f64]| -> Vec<f64> {
            let mut probe = kps;
            for i in 0..9 {
                probe.points[i] = Vec2::new(x[2 * i], x[2 * i + 1]);
            }
            probe.mask = mask;
            let dim = Dimension3D {
                h: x[18],
                w: x[19],
                l: x[20],
            };
            let (t, _) = grm::solve_full(&probe, &dim, x[21], cam).expect("perturbed solve");
            vec![t.x, t.y, t.z]
        };
        let fd = synth::finite_diff_jacobian(solve, &x, STEP);
        for (row, fd_row) in fd.iter().enumerate() {
            for (col, &fd_val) in fd_row.iter().enumerate() {
                let analytic = if col < 18 {
                    jac.wrt_keypoints[(row, col)]
                } else if col < 21 {
                    jac.wrt_dim[(row, col - 18)]
                } else {
                    jac.wrt_theta[row]
                };
                let denom = analytic.abs().max(fd_val.abs()).max(FLOOR);
                worst = worst.max((analytic - fd_val).abs() / denom);
            }
        }
    }
    Ok(worst)
}
