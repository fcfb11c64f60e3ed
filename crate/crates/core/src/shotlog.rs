//! JSON-lines shot log.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::director::{Phase, ShotLogRecord};

#[derive(Debug, Error)]
pub enum ShotLogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_record<W: Write>(out: &mut W, rec: &ShotLogRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")
}

pub fn read_log<R: BufRead>(input: R) -> Result<Vec<ShotLogRecord>, ShotLogError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| ShotLogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Maximal run of consecutive records sharing a phase, event and spec.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    pub phase: Phase,
    pub event_id: Option<u64>,
    pub spec: Option<String>,
    /// Index of the first record.
    pub first: usize,
    pub ticks: usize,
}

impl PhaseRun {
    pub fn seconds(&self, tick_rate: f64) -> f64 {
        self.ticks as f64 / tick_rate
    }
}

pub fn phase_runs(records: &[ShotLogRecord]) -> Vec<PhaseRun> {
    let mut runs: Vec<PhaseRun> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match runs.last_mut() {
            Some(last) if last.phase == r.phase && last.event_id == r.event_id && last.spec == r.spec => {
                last.ticks += 1;
            }
            _ => runs.push(PhaseRun {
                phase: r.phase,
                event_id: r.event_id,
                spec: r.spec.clone(),
                first: i,
                ticks: 1,
            }),
        }
    }
    runs
}

/// Records that announce an event.
pub fn announcements(records: &[ShotLogRecord]) -> usize {
    records.iter().filter(|r| r.event.is_some()).count()
}
