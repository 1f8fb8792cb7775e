//! Append-only JSON-lines log of objective evaluations.
//!
//! Each line records one evaluation `(campaign, index, z, seed, y)`. A run
//! that reopens the log replays cached values instead of re-simulating,
//! after checking that it queries the very same point.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub campaign: String,
    pub index: usize,
    pub z: Vec<f64>,
    pub seed: u64,
    pub y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header(serde_json::Value),
    Eval(JournalEntry),
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    header: Option<serde_json::Value>,
    cache: HashMap<(String, usize), JournalEntry>,
    file: Mutex<File>,
}

impl Journal {
    /// Starts a fresh journal, replacing any file at `path`.
    pub fn create(path: impl AsRef<Path>, header: serde_json::Value) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::create(&path)?;
        writeln!(file, "{}", serde_json::to_string(&Line::Header(header.clone()))?)?;
        file.flush()?;
        Ok(Self {
            path,
            header: Some(header),
            cache: HashMap::new(),
            file: Mutex::new(file),
        })
    }

    /// Reopens an existing journal for appending. A truncated final line
    /// (a write cut short) is dropped; any other unreadable line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let reader = BufReader::new(File::open(&path).map_err(|e| Error::Journal(format!("{}: {e}", path.display())))?);
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let raw = std::fs::read(&path)?;
        let ends_clean = raw.last().is_none_or(|&b| b == b'\n');

        let mut header = None;
        let mut cache = HashMap::new();
        let mut valid_bytes = 0usize;
        for (n, text) in lines.iter().enumerate() {
            let last = n + 1 == lines.len();
            let line: Line = match serde_json::from_str(text) {
                Ok(line) => line,
                Err(_) if last && !ends_clean => break,
                Err(e) => return Err(Error::Journal(format!("{} line {}: {e}", path.display(), n + 1))),
            };
            match line {
                Line::Header(h) if n == 0 => header = Some(h),
                Line::Header(_) => return Err(Error::Journal(format!("{} line {}: stray header", path.display(), n + 1))),
                Line::Eval(e) => {
                    let key = (e.campaign.clone(), e.index);
                    if let Some(prev) = cache.get(&key) {
                        if prev != &e {
                            return Err(Error::Journal(format!(
                                "{} line {}: conflicting entries for {}#{}",
                                path.display(),
                                n + 1,
                                e.campaign,
                                e.index
                            )));
                        }
                    }
                    cache.insert(key, e);
                }
            }
            valid_bytes += text.len() + 1;
        }
        let file = OpenOptions::new().write(true).open(&path)?;
        // drop a torn tail so new lines start on a fresh record
        file.set_len(valid_bytes.min(raw.len()) as u64)?;
        let mut file = OpenOptions::new().append(true).open(&path)?;
        if valid_bytes > raw.len() {
            writeln!(file)?;
        }
        Ok(Self {
            path,
            header,
            cache,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> Option<&serde_json::Value> {
        self.header.as_ref()
    }

    /// Cached evaluations, in no particular order.
    pub fn entries(&self) -> impl Iterator<Item = &JournalEntry> {
        self.cache.values()
    }

    pub fn cached(&self, campaign: &str) -> usize {
        self.cache.keys().filter(|(c, _)| c == campaign).count()
    }

    /// Returns the logged value for `(campaign, index)` or computes, logs
    /// and returns it. A cached entry queried at a different `z` or seed
    /// means the run has diverged from the journal.
    pub fn record(
        &self,
        campaign: &str,
        index: usize,
        z: &[f64],
        seed: u64,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if let Some(e) = self.cache.get(&(campaign.to_string(), index)) {
            let same_z = e.z.len() == z.len() && e.z.iter().zip(z).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same_z || e.seed != seed {
                return Err(Error::Journal(format!(
                    "{campaign}#{index}: run queried z = {z:?} (seed {seed}) but the journal holds z = {:?} (seed {})",
                    e.z, e.seed
                )));
            }
            return Ok(e.y);
        }
        let y = compute()?;
        let entry = JournalEntry {
            campaign: campaign.to_string(),
            index,
            z: z.to_vec(),
            seed,
            y,
        };
        let line = serde_json::to_string(&Line::Eval(entry))?;
        let mut file = self.file.lock().map_err(|_| Error::Journal("journal lock poisoned".into()))?;
        writeln!(file, "{line}")?;
        file.flush()?;
        Ok(y)
    }
}
