//! Hashes embedded in every output so a report can be traced to its inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance comment lines (without the leading `# `).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    lines: Vec<String>,
}

impl Provenance {
    /// `config_hash` identifies the settings; the timestamp line is optional
    /// so reruns can be byte-identical.
    pub fn new(command: &str, config_hash: &str, timestamp: bool) -> Self {
        let mut lines = vec![
            format!("fx {} {command}", env!("CARGO_PKG_VERSION")),
            format!("config sha256={config_hash}"),
        ];
        if timestamp {
            lines.push(format!(
                "generated_at={}",
                chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            ));
        }
        Self { lines }
    }

    /// Records an input file by name and content hash. Paths are left out so
    /// identical runs in different directories agree.
    pub fn input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let hash = sha256_file(path)?;
        self.lines.push(format!("input {label} {name} sha256={hash}"));
        Ok(())
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// The lines as a `# `-prefixed block.
    pub fn block(&self) -> String {
        self.lines.iter().fold(String::new(), |mut s, l| {
            let _ = writeln!(s, "# {l}");
            s
        })
    }
}
