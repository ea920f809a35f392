use std::fs;
use std::path::{Path, PathBuf};

use kces::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Everything needed to reproduce a run: the command line, the parsed
/// parameters and digests of every file read or written. No timestamps, so
/// identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest<P: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub params: P,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl<P: Serialize> RunManifest<P> {
    pub fn new(command: &'static str, params: P) -> Self {
        RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().skip(1).collect(),
            params,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        text.push('\n');
        kces::io::write_text(path, &text)
    }
}

/// `<output>.manifest.json` next to the primary output.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut name = primary
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "run".into());
    name.push(".manifest.json");
    primary.with_file_name(name)
}
