//! Output directory handling. Every file written here carries the config
//! hash, and the run record lists them all.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use deltamass::{Field, MassReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const RECORD_FILE: &str = "run.json";

/// Contents of `run.json`.
#[derive(Debug, Deserialize, Serialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    #[serde(with = "deltamass::report::sig17")]
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub reports: Vec<MassReport>,
}

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    outputs: Vec<String>,
    reports: Vec<MassReport>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.into(), outputs: Vec::new(), reports: Vec::new(), started: Instant::now() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Field CSV with the hash as a second comment line. `extra` lines are
    /// written as further comments.
    pub fn field(&mut self, name: &str, field: &Field<f64>, extra: &[String]) -> Result<()> {
        let mut text = Vec::new();
        field.write_csv(&mut text)?;
        let split = text.iter().position(|&b| b == b'\n').map_or(text.len(), |i| i + 1);
        let mut w = self.open(name)?;
        w.write_all(&text[..split])?;
        writeln!(w, "# config_hash={}", self.hash)?;
        for line in extra {
            writeln!(w, "# {line}")?;
        }
        w.write_all(&text[split..])?;
        Ok(w.flush()?)
    }

    /// Plain CSV: hash comment, header, rows.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut w = self.open(name)?;
        writeln!(w, "# config_hash={}", self.hash)?;
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        Ok(w.flush()?)
    }

    /// JSON text; the caller embeds the hash.
    pub fn json(&mut self, name: &str, text: &str) -> Result<()> {
        let mut w = self.open(name)?;
        writeln!(w, "{text}")?;
        Ok(w.flush()?)
    }

    pub fn report(&mut self, name: &str, report: &MassReport) -> Result<()> {
        self.json(name, &report.to_json())?;
        self.reports.push(report.clone());
        Ok(())
    }

    /// Writes `run.json`; the wall time is the only nondeterministic field
    /// and appears nowhere else.
    pub fn finish(self, config: &RunConfig) -> Result<PathBuf> {
        let record = RunRecord {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            config_hash: self.hash.clone(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
            reports: self.reports,
        };
        let path = self.dir.join(RECORD_FILE);
        fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Hash embedded in an output file: `provenance.input_hash` or
/// `config_hash` for JSON, a `# config_hash=` line for CSV.
pub fn embedded_hash(path: &Path) -> Result<Option<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let hash = value
            .pointer("/provenance/input_hash")
            .or_else(|| value.get("config_hash"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        return Ok(hash);
    }
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("config_hash=").map(str::to_string)))
}
