//! Run manifests: flat `key=value` files written next to every artifact.
//!
//! Repeated keys (`arg`, `input`, `output`) keep their order. The manifest
//! hash covers everything that determines the output bytes (subcommand,
//! arguments, configuration, seed and tool version) and deliberately leaves
//! out output paths, so a rerun into another directory carries the same hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub subcommand: String,
    /// Command-line arguments after the subcommand, output flags removed.
    pub args: Vec<String>,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(subcommand: impl Into<String>, seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.into(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            ..RunManifest::default()
        }
    }

    pub fn with_config<K: Into<String>, V: Into<String>>(
        mut self,
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        self.config
            .extend(pairs.into_iter().map(|(k, v)| (k.into(), v.into())));
        self
    }

    fn reproducible_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "subcommand={}", self.subcommand);
        let _ = writeln!(out, "tool_version={}", self.tool_version);
        let _ = writeln!(out, "seed={}", self.seed);
        for arg in &self.args {
            let _ = writeln!(out, "arg={arg}");
        }
        for input in &self.inputs {
            let _ = writeln!(out, "input={input}");
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = self.reproducible_text();
        for output in &self.outputs {
            let _ = writeln!(out, "output={output}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut manifest = RunManifest::default();
        for line in text.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {line:?} lacks '='")))?;
            match key {
                "subcommand" => manifest.subcommand = value.to_string(),
                "tool_version" => manifest.tool_version = value.to_string(),
                "seed" => {
                    manifest.seed = value
                        .parse()
                        .map_err(|e| Error::Format(format!("manifest seed: {e}")))?
                }
                "arg" => manifest.args.push(value.to_string()),
                "input" => manifest.inputs.push(value.to_string()),
                "output" => manifest.outputs.push(value.to_string()),
                other => match other.strip_prefix("config.") {
                    Some(k) => manifest.config.push((k.to_string(), value.to_string())),
                    None => return Err(Error::Format(format!("unknown manifest key {other:?}"))),
                },
            }
        }
        Ok(manifest)
    }

    /// First 16 hex digits of the SHA-256 over the reproducible fields.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.reproducible_text().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Comment line placed at the top of every CSV artifact.
    pub fn csv_comment(&self) -> String {
        format!("g2bin {} manifest={}", self.tool_version, self.hash())
    }

    /// Full argument vector that reruns this manifest, writing to `output`.
    pub fn rerun_args(&self, output_flag: &str, output: &str) -> Vec<String> {
        let mut argv = vec![self.subcommand.clone()];
        argv.extend(self.args.iter().cloned());
        argv.push(output_flag.to_string());
        argv.push(output.to_string());
        argv
    }

    pub fn write_next_to(&self, artifact: &Path) -> Result<PathBuf> {
        let path = manifest_path(artifact);
        fs::write(&path, self.to_text())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// `<artifact>.manifest`
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".manifest");
    PathBuf::from(name)
}
