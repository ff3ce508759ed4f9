//! Artifact emission: CSV and JSON files with deterministic formatting.
//!
//! Floats in CSV files are printed with 17 significant digits so repeated
//! runs are byte-identical and values round-trip exactly. JSON is emitted
//! through serde with struct-declared key order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 64 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    fs::write(path, text)
}

/// Run manifest: which artifacts exist and whether the run completed.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: &'static str,
    pub error: Option<ErrorReport>,
    pub artifacts: Vec<String>,
}

/// Machine-readable error description.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub code: i32,
    pub message: String,
}

pub struct ArtifactSink {
    dir: PathBuf,
    command: String,
    written: Vec<String>,
}

impl ArtifactSink {
    pub fn new(dir: &Path, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: &[Vec<String>]) -> std::io::Result<()> {
        write_csv(&self.path(name), header, rows)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        write_json(&self.path(name), value)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest; partial artifact sets are marked incomplete.
    pub fn finish(mut self, error: Option<ErrorReport>) -> std::io::Result<()> {
        let status = if error.is_none() { "complete" } else { "incomplete" };
        let manifest = Manifest {
            command: self.command.clone(),
            status,
            error,
            artifacts: std::mem::take(&mut self.written),
        };
        write_json(&self.dir.join("MANIFEST.json"), &manifest)
    }
}

/// Prints one acceptance-style line and returns the flag.
pub fn report_check(name: &str, pass: bool, detail: &str) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut line = format!("[{tag}] {name}");
    if !detail.is_empty() {
        line.push_str(": ");
        line.push_str(detail);
    }
    println!("{line}");
    std::io::stdout().flush().ok();
    pass
}
