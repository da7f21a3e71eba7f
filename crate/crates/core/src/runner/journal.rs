//! Append-only record of finished work units.
//!
//! One JSON line per (scenario, replicate). A run killed mid-write leaves at
//! most one torn trailing line, which [`Journal::open`] discards.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::ReplicateOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotEstimable {
    pub model_id: String,
    pub reason: String,
}

/// Everything produced for one (scenario, replicate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub scenario_id: usize,
    pub replicate: usize,
    pub outcomes: Vec<ReplicateOutcome>,
    pub not_estimable: Vec<NotEstimable>,
    /// Studies re-simulated after a degenerate Cox fit.
    pub resimulated: usize,
    pub seconds: f64,
}

impl UnitRecord {
    pub fn key(&self) -> (usize, usize) {
        (self.scenario_id, self.replicate)
    }
}

/// Finished units keyed by (scenario, replicate).
pub type Completed = BTreeMap<(usize, usize), UnitRecord>;

pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens `path` for appending and returns the records already in it.
    /// With `keep = false` any existing journal is discarded.
    pub fn open(path: &Path, keep: bool) -> io::Result<(Self, Completed)> {
        let mut done = BTreeMap::new();
        if keep && path.exists() {
            let mut valid = String::new();
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                // A line that fails to parse can only be the torn tail of an
                // interrupted write.
                if let Ok(rec) = serde_json::from_str::<UnitRecord>(&line) {
                    valid.push_str(&line);
                    valid.push('\n');
                    done.insert(rec.key(), rec);
                }
            }
            let tmp = path.with_extension("jsonl.tmp");
            fs::write(&tmp, valid)?;
            fs::rename(&tmp, path)?;
        } else if path.exists() {
            fs::remove_file(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((Self { path: path.to_path_buf(), file }, done))
    }

    pub fn append(&mut self, rec: &UnitRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(rec).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
