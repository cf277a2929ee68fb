//! Textual augmentation specs for the CLI: `identity` or a comma list of
//! `scale=S`, `dx=PX`, `dy=PX` and the bare `flip` flag, e.g.
//! `scale=1.1,dx=4,dy=-2,flip`.

use monobox::augment::{make_aug, AffineAug};

use crate::CliError;

pub fn parse_augspec(spec: &str, image_width: f64) -> Result<AffineAug, CliError> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "identity" {
        return Ok(AffineAug::identity(image_width));
    }
    let mut scale = 1.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    let mut flip = false;
    for part in spec.split(',') {
        let part = part.trim();
        if part == "flip" {
            flip = true;
            continue;
        }
        let Some((key, value)) = part.split_once('=') else {
            return Err(CliError::Input(format!(
                "bad augmentation term '{part}' (expected key=value or 'flip')"
            )));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| CliError::Input(format!("bad number in augmentation term '{part}'")))?;
        match key.trim() {
            "scale" => scale = value,
            "dx" => dx = value,
            "dy" => dy = value,
            other => {
                return Err(CliError::Input(format!(
                    "unknown augmentation key '{other}'"
                )))
            }
        }
    }
    make_aug(scale, (dx, dy), flip, image_width)
        .map_err(|e| CliError::Input(format!("invalid augmentation '{spec}': {e}")))
}
