//! Append-only experiment journal, one JSON object per line.
//!
//! A session writes `start` once, then a `submit` line per accepted
//! annotation and an `advance` line per completed round. Replaying the lines
//! through the engine rebuilds the session after a restart.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use boxal_core::data_io::RoundRecord;
use boxal_core::engine::ExperimentConfig;
use boxal_core::geometry::BoundingBox;
use boxal_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Start {
        dataset: String,
        config: ExperimentConfig,
    },
    Submit {
        round: usize,
        image_id: u64,
        boxes: Vec<BoundingBox>,
    },
    Advance {
        round: usize,
        record: RoundRecord,
    },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (or creates) the journal and returns the events already in it.
    ///
    /// A torn final line, left by a crash mid-write, is dropped and truncated
    /// away; a malformed line anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Event>)> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;

        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut lineno = 0;
        let mut missing_newline = false;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            let complete = line.ends_with('\n');
            if line.trim().is_empty() {
                good_len += n as u64;
                continue;
            }
            match serde_json::from_str::<Event>(line.trim_end()) {
                Ok(ev) => {
                    events.push(ev);
                    good_len += n as u64;
                }
                Err(_) if !complete => break,
                Err(e) => {
                    return Err(Error::Report(format!(
                        "{}:{lineno}: bad journal line: {e}",
                        path.display()
                    )))
                }
            }
            if !complete {
                missing_newline = true;
            }
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        if missing_newline {
            file.write_all(b"\n")?;
        }
        Ok((Self { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}
