//! `monobox eval`: KITTI-style evaluation over a detections directory and a
//! ground-truth directory with matching file stems.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use monobox::eval::{average_precision, default_iou_threshold, Metric, RecallSampling};
use monobox::kitti::{self, Difficulty, KittiObject};

use crate::report::{write_rows, Format};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    All,
    #[value(name = "2d")]
    Ap2d,
    Bev,
    #[value(name = "3d")]
    Ap3d,
    Aos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    #[value(name = "11")]
    Eleven,
    #[value(name = "40")]
    Forty,
}

#[derive(Parser)]
pub struct Args {
    /// Directory of 16-field detection files.
    #[arg(long)]
    det_dir: PathBuf,
    /// Directory of ground-truth label files with matching stems.
    #[arg(long)]
    gt_dir: PathBuf,
    /// Classes to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "Car")]
    classes: Vec<String>,
    #[arg(long, value_enum, default_value_t = MetricArg::All)]
    metric: MetricArg,
    #[arg(long, value_enum, default_value_t = SamplingArg::Forty)]
    sampling: SamplingArg,
    /// Override the per-class IoU threshold.
    #[arg(long)]
    iou: Option<f64>,
    /// Also dump the interpolated precision/recall curves to this CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ApRow {
    class: String,
    metric: String,
    difficulty: String,
    threshold: f64,
    ap: f64,
}

fn stems(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let mut out = BTreeSet::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

fn load_dir(dir: &Path, stems: &[String]) -> Result<Vec<Vec<KittiObject>>, CliError> {
    stems
        .par_iter()
        .map(|stem| {
            let path = dir.join(format!("{stem}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            kitti::parse_labels(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn run(args: Args) -> Result<(), CliError> {
    let det_stems = stems(&args.det_dir)?;
    let gt_stems = stems(&args.gt_dir)?;
    // A fully empty detection directory means "nothing detected anywhere";
    // a partial stem mismatch is an input error.
    if !det_stems.is_empty() && det_stems != gt_stems {
        let missing: Vec<_> = gt_stems.difference(&det_stems).take(5).cloned().collect();
        let extra: Vec<_> = det_stems.difference(&gt_stems).take(5).cloned().collect();
        return Err(CliError::Input(format!(
            "detection and ground-truth stems differ (missing dets: {missing:?}, unmatched dets: {extra:?})"
        )));
    }
    if gt_stems.is_empty() {
        return Err(CliError::Input("no label files found".into()));
    }
    let stems: Vec<String> = gt_stems.into_iter().collect();
    let dets = if det_stems.is_empty() {
        vec![Vec::new(); stems.len()]
    } else {
        load_dir(&args.det_dir, &stems)?
    };
    let gts = load_dir(&args.gt_dir, &stems)?;

    let metrics: Vec<Metric> = match args.metric {
        MetricArg::All => vec![Metric::Ap2d, Metric::ApBev, Metric::Ap3d, Metric::Aos],
        MetricArg::Ap2d => vec![Metric::Ap2d],
        MetricArg::Bev => vec![Metric::ApBev],
        MetricArg::Ap3d => vec![Metric::Ap3d],
        MetricArg::Aos => vec![Metric::Aos],
    };
    let sampling = match args.sampling {
        SamplingArg::Eleven => RecallSampling::Eleven,
        SamplingArg::Forty => RecallSampling::Forty,
    };

    let mut rows = Vec::new();
    let mut curve_csv = String::from("class,metric,difficulty,recall,precision\n");
    for class in &args.classes {
        for &metric in &metrics {
            let threshold = args
                .iou
                .unwrap_or_else(|| default_iou_threshold(class, metric));
            for level in Difficulty::EVAL_LEVELS {
                let result =
                    average_precision(&dets, &gts, class, metric, level, threshold, sampling);
                for (r, p) in result
                    .curve
                    .recall_points
                    .iter()
                    .zip(result.curve.precision.iter())
                {
                    curve_csv.push_str(&format!(
                        "{},{},{},{:.4},{:.6}\n",
                        class,
                        metric.label(),
                        level.label(),
                        r,
                        p
                    ));
                }
                rows.push(ApRow {
                    class: class.clone(),
                    metric: metric.label().to_string(),
                    difficulty: level.label().to_string(),
                    threshold,
                    ap: result.ap,
                });
            }
        }
    }
    if let Some(path) = &args.curves {
        std::fs::write(path, &curve_csv)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }

    write_rows(
        args.out.as_ref(),
        args.format,
        &rows,
        "class,metric,difficulty,threshold,ap",
        |r| {
            format!(
                "{},{},{},{:.2},{:.6}",
                r.class, r.metric, r.difficulty, r.threshold, r.ap
            )
        },
    )
}
