//! Append-only event log: each record is a big-endian `u32` byte length
//! followed by that many bytes of JSON. Appends are fsynced. A record cut
//! short by a crash is dropped on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{AnnotationEvent, WorkflowError};

#[derive(Debug)]
pub enum LogBackend {
    Memory,
    File { path: PathBuf, file: File },
}

#[derive(Debug)]
pub struct EventLog {
    backend: LogBackend,
    records: usize,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog { backend: LogBackend::Memory, records: 0 }
    }

    /// Opens or creates the log at `path` and returns every intact event.
    pub fn open(path: &Path) -> Result<(Self, Vec<AnnotationEvent>), WorkflowError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (events, good) = decode_records(&bytes)?;
        if good < bytes.len() {
            file.set_len(good as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let records = events.len();
        Ok((EventLog { backend: LogBackend::File { path: path.to_path_buf(), file }, records }, events))
    }

    /// Reads events without opening for append.
    pub fn read(path: &Path) -> Result<Vec<AnnotationEvent>, WorkflowError> {
        let bytes = std::fs::read(path)?;
        Ok(decode_records(&bytes)?.0)
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            LogBackend::Memory => None,
            LogBackend::File { path, .. } => Some(path),
        }
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn append(&mut self, event: &AnnotationEvent) -> Result<(), WorkflowError> {
        if let LogBackend::File { file, .. } = &mut self.backend {
            file.write_all(&encode_record(event)?)?;
            file.sync_data()?;
        }
        self.records += 1;
        Ok(())
    }
}

pub(crate) fn encode_record(event: &AnnotationEvent) -> Result<Vec<u8>, WorkflowError> {
    let body = serde_json::to_vec(event)?;
    let len = u32::try_from(body.len()).map_err(|_| WorkflowError::validation("event", "record too large"))?;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Intact events and the byte length they occupy. A short or unparsable
/// final record is a torn write; an unparsable record followed by more data
/// is corruption.
fn decode_records(bytes: &[u8]) -> Result<(Vec<AnnotationEvent>, usize), WorkflowError> {
    let mut events = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        if bytes.len() - at < 4 {
            break;
        }
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        let end = at + 4 + len;
        if end > bytes.len() {
            break;
        }
        match serde_json::from_slice::<AnnotationEvent>(&bytes[at + 4..end]) {
            Ok(e) => events.push(e),
            Err(_) if end == bytes.len() => break,
            Err(e) => return Err(WorkflowError::Corrupt { offset: at as u64, message: e.to_string() }),
        }
        at = end;
    }
    Ok((events, at))
}
