//! Artifact writer: every file goes through here so the manifest lists it
//! with its checksum.

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub struct Output {
    dir: PathBuf,
    dat: bool,
    files: Vec<(String, String, usize)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn new(dir: &Path, dat: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        Ok(Output { dir: dir.to_path_buf(), dat, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;
        self.files.push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(name, e))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV with a header row; with `--dat` also a whitespace-separated mirror.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::io(name, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::io(name, e))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(name, e))?;
        self.write(name, &bytes)?;
        if self.dat {
            let mut text = format!("# {}\n", header.join(" "));
            for row in rows {
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            self.write(&name.replace(".csv", ".dat"), text.as_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self, command: &str, config_hash: &str) -> Result<PathBuf, CliError> {
        let files: Vec<_> = self.files.iter().map(|(n, h, b)| json!({ "path": n, "sha256": h, "bytes": b })).collect();
        let manifest = json!({
            "command": command,
            "config_sha256": config_hash,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": tunnelkit::par::threads(),
            "files": files,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io("manifest.json", e))? + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(path.display(), e))?;
        self.files.clear();
        Ok(path)
    }
}

/// Shortest round-trip formatting keeps CSV output bit-exact.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
