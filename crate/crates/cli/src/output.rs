//! Artifact encoders (CSV, 16-bit PGM, JSON) and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use gsm_biphoton::scan::Profile2D;

use crate::config::Resolved;
use crate::error::CliError;

/// A named output file held in memory until the whole run has succeeded.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Column-oriented CSV; headers carry units, floats use shortest round-trip form.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(headers: &[&str]) -> Self {
        Csv { text: format!("{}\n", headers.join(",")), width: headers.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.width);
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(v) => write!(self.text, "{v:e}").unwrap(),
                Cell::U(v) => write!(self.text, "{v}").unwrap(),
                Cell::S(v) => self.text.push_str(v),
            }
        }
        self.text.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact { name: name.to_string(), bytes: self.text.into_bytes() }
    }
}

pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

/// Binary PGM (P5, maxval 65535, big-endian). Row 0 of the image is the
/// largest `y`, so the picture has `y` pointing up.
pub fn pgm(profile: &Profile2D) -> Vec<u8> {
    let pixels = profile.to_u16();
    let mut out = format!("P5\n{} {}\n65535\n", profile.cols, profile.rows).into_bytes();
    out.reserve(2 * pixels.len());
    for r in (0..profile.rows).rev() {
        for &v in &pixels[r * profile.cols..(r + 1) * profile.cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable value");
    v.push(b'\n');
    v
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    config_sha256: String,
    resolved: &'a Resolved,
    defaults_applied: &'a [String],
    inputs: &'a [FileRecord],
    outputs: Vec<FileRecord>,
}

pub fn manifest(resolved: &Resolved, config_bytes: &[u8], inputs: &[FileRecord], artifacts: &[Artifact]) -> Artifact {
    let m = Manifest {
        tool: "gsm-biphoton",
        version: env!("CARGO_PKG_VERSION"),
        experiment: resolved.experiment.name(),
        seed: resolved.seed,
        config_sha256: sha256_hex(config_bytes),
        resolved,
        defaults_applied: &resolved.defaults_applied,
        inputs,
        outputs: artifacts
            .iter()
            .map(|a| FileRecord { file: a.name.clone(), bytes: a.bytes.len(), sha256: sha256_hex(&a.bytes) })
            .collect(),
    };
    Artifact { name: "manifest.json".to_string(), bytes: json(&m) }
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
