//! Report plumbing shared by the subcommands: pick CSV or JSON, write to
//! stdout or a file.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Serializes rows as JSON or as CSV via the supplied header/row printer.
pub fn write_rows<T, F>(
    out: Option<&PathBuf>,
    format: Format,
    rows: &[T],
    csv_header: &str,
    mut csv_row: F,
) -> Result<(), CliError>
where
    T: Serialize,
    F: FnMut(&T) -> String,
{
    let text = match format {
        Format::Json => serde_json::to_string_pretty(rows).expect("report rows serialize") + "\n",
        Format::Csv => {
            let mut s = String::from(csv_header);
            s.push('\n');
            for row in rows {
                s.push_str(&csv_row(row));
                s.push('\n');
            }
            s
        }
    };
    emit(out, &text)
}

/// Writes a single JSON document (used by breakdown-style reports).
pub fn write_json<T: Serialize>(out: Option<&PathBuf>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    emit(out, &text)
}

pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .expect("stdout write");
            Ok(())
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}
