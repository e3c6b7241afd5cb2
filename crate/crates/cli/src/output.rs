//! Deterministic file output. Reals carry 17 significant digits so every
//! value round-trips bit-exactly; lines end in LF regardless of platform.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

/// Hex SHA-256 of the config text and the command-line overrides.
pub fn config_hash(config_text: &str, overrides: &str) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    h.update(b"\0");
    h.update(overrides.as_bytes());
    format!("{:x}", h.finalize())
}

pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// CSV table headed by a `# config_sha256=` comment line.
pub struct Csv {
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(hash: &str, columns: &[String]) -> Self {
        let mut buf = format!("# config_sha256={hash}\n");
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Self {
            buf,
            width: columns.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.width, "row width differs from the header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{c}");
        }
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &self.buf)
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}
