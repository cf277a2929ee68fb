pub mod consistency;
pub mod eval;
pub mod extreme;
pub mod fixture;
pub mod gradcheck;
pub mod solve;

use std::path::Path;

use monobox::codec::HeadMaps;
use monobox::kitti::{self, Calibration};

use crate::report::read_to_string;
use crate::CliError;

pub fn load_calibration(path: &Path) -> Result<Calibration, CliError> {
    let text = read_to_string(path)?;
    kitti::parse_calib(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_head_maps(path: &Path) -> Result<HeadMaps, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = std::io::BufReader::new(file);
    HeadMaps::read_from(&mut reader)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
