use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::Judgment;
use crate::{Error, Result};

/// Append-only JSONL judgment log. Each append is one `write` of a whole
/// line followed by `fsync`, so a crash leaves at most a partial last line,
/// which [`JudgmentLog::open`] discards.
#[derive(Debug)]
pub struct JudgmentLog {
    path: PathBuf,
    file: File,
}

impl JudgmentLog {
    /// Opens or creates the log and returns the entries already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<(JudgmentLog, Vec<Judgment>)> {
        let path = path.as_ref().to_path_buf();
        let io = |e| Error::io(&path, e);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;

        let mut entries = Vec::new();
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut good_len = 0u64;
        let mut line_no = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(io)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            if !line.ends_with('\n') {
                break;
            }
            if !line.trim().is_empty() {
                let j: Judgment = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("{}: {e}", path.display()),
                })?;
                entries.push(j);
            }
            good_len += n as u64;
        }
        drop(reader);
        if file.seek(SeekFrom::End(0)).map_err(io)? != good_len {
            file.set_len(good_len).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        Ok((JudgmentLog { path, file }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably appends one judgment; returns only after `fsync`.
    pub fn append(&mut self, j: &Judgment) -> Result<()> {
        let mut buf = serde_json::to_vec(j)?;
        buf.push(b'\n');
        self.file
            .write_all(&buf)
            .map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }
}
