//! Per-run manifests: the fully resolved configuration of a command plus
//! content hashes of every input file.
//!
//! Manifests deliberately omit timestamps and the output directory so that
//! two runs with identical inputs and flags produce identical manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<InputFile>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub results: Value,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            results: Value::Null,
        }
    }

    /// Records an input file together with its SHA-256. A MIAF file's
    /// sidecar is hashed too when it exists.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile { path: path.display().to_string(), sha256: sha256_file(path)? });
        let side = crate::io::sidecar_path(path);
        if side.is_file() {
            self.inputs.push(InputFile { path: side.display().to_string(), sha256: sha256_file(&side)? });
        }
        Ok(())
    }

    pub fn add_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// File name of this manifest inside the output directory, derived
    /// from the command so that several commands can share one directory.
    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.command.replace(' ', "_"))
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        crate::io::write_text(&out_dir.join(self.file_name()), &self.to_json())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(digest: &[u8]) -> String {
    digest.iter().fold(String::with_capacity(2 * digest.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex(&hasher.finalize()))
}
