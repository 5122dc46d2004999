//! Result files: atomic writes, CSV at twelve significant digits and the
//! inventory recorded in the manifest.

use std::path::{Path, PathBuf};

use perron_core::io::{fmt12, write_atomic};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writer for one output directory.
pub struct Artifacts {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path, formats: &[Format]) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), formats: formats.to_vec(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Pretty JSON; always written for the manifest and summary.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// `report_<name>.json`, when JSON output is enabled.
    pub fn report(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        if self.formats.contains(&Format::Json) {
            self.json(&format!("report_{name}.json"), value)?;
        }
        Ok(())
    }

    /// `series_<name>.csv` with one row per entry of `rows`, when CSV output is enabled.
    pub fn series<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        let mut out = header.join(",");
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.as_ref().iter().map(|v| fmt12(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        self.write(&format!("series_{name}.csv"), out.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_uses_twelve_digits_and_is_inventoried() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path(), &[Format::Csv]).unwrap();
        a.series("x", &["t", "v"], [[0.0, 1.0 / 3.0]]).unwrap();
        a.report("skipped", &1).unwrap();
        let text = std::fs::read_to_string(dir.path().join("series_x.csv")).unwrap();
        assert_eq!(text, "t,v\n0,3.33333333333e-1\n");
        assert_eq!(a.files().len(), 1);
        assert_eq!(a.files()[0].sha256, sha256_hex(text.as_bytes()));
    }
}
