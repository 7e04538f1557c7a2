//! Output directory handling and provenance headers.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const HEADER_PREFIX: &str = "# asacd ";

/// The fully resolved settings of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// `(path, sha256)` of every input file read.
    pub inputs: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Self {
        Provenance {
            command: command.into(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::validation("input", format!("{}: {e}", path.display())))?;
        self.inputs.push((
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        ));
        Ok(self)
    }

    fn canonical(&self) -> String {
        serde_json::to_string(self).expect("provenance serializes")
    }

    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Header lines without the leading `#`.
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!(" asacd {} {}", env!("CARGO_PKG_VERSION"), self.command),
            format!(" config_sha256: {}", self.config_hash()),
            format!(" seed: {}", self.seed),
            format!(" config: {}", self.canonical()),
        ]
    }

    pub fn header(&self) -> String {
        self.header_lines()
            .iter()
            .map(|l| format!("#{l}\n"))
            .collect()
    }
}

/// Writes artifacts into one directory only.
pub struct OutDir {
    root: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path, provenance: Provenance) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::validation("output", format!("{}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn target(&self, rel: &str) -> Result<PathBuf, CliError> {
        let rel_path = Path::new(rel);
        let plain = rel_path
            .components()
            .all(|c| matches!(c, std::path::Component::Normal(_)));
        if !plain || rel.is_empty() {
            return Err(CliError::internal(
                "output",
                format!("artifact path {rel:?} escapes the output directory"),
            ));
        }
        Ok(self.root.join(rel_path))
    }

    /// Writes provenance header plus body.
    pub fn write(&mut self, rel: &str, body: &str) -> Result<PathBuf, CliError> {
        let mut text = self.provenance.header();
        text.push_str(body);
        self.write_raw(rel, text.as_bytes())
    }

    /// Writes bytes as given; callers supply their own header.
    pub fn write_raw(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.target(rel)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::internal("output", format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::internal("output", format!("{}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// JSONL records after the header; readers skip `#` lines.
    pub fn write_records<T: Serialize>(
        &mut self,
        rel: &str,
        records: &[T],
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        asacd_core::records::write_records(&mut buf, &self.provenance.header_lines(), records)
            .map_err(CliError::from)?;
        self.write_raw(rel, &buf)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Splits an artifact into its provenance header lines and body.
pub fn split_header(text: &str) -> (Vec<&str>, &str) {
    let mut header = Vec::new();
    let mut rest = text;
    while rest.starts_with('#') {
        let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
        header.push(rest[..end].trim_end());
        rest = &rest[end..];
    }
    (header, rest)
}

/// Header field value, e.g. `seed` or `config_sha256`.
pub fn header_field<'a>(header: &[&'a str], key: &str) -> Option<&'a str> {
    let prefix = format!("# {key}: ");
    header.iter().find_map(|l| l.strip_prefix(prefix.as_str()))
}
