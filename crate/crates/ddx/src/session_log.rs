//! Append-only JSONL event log of one session. Replaying the log through
//! the engine rebuilds the session state and its traces.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ddx_core::corpus::{fnv1a, SoapSegment, Utterance};
use ddx_core::pipeline::{run_turn_with, Engine, PipelineConfig, SessionState, TurnTrace};
use serde::{Deserialize, Serialize};

use crate::data::{self, DataError};

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        version: u32,
        session_id: String,
        config: PipelineConfig,
    },
    Patient {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segments: Option<Vec<SoapSegment>>,
    },
    Reply {
        turn: usize,
        text: String,
        /// FNV-1a of the trace's JSON, hex.
        trace_digest: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: replay diverged at event {seq}: {message}")]
    Diverged { path: PathBuf, seq: u64, message: String },
}

pub fn trace_digest(trace: &TurnTrace) -> String {
    let json = serde_json::to_string(trace).expect("trace serializes");
    format!("{:016x}", fnv1a(0, json.as_bytes()))
}

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

/// Writer that appends records and flushes after each one.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    out: BufWriter<File>,
    next_seq: u64,
}

impl SessionLog {
    /// Starts a new log; fails if the file already exists.
    pub fn create(path: &Path, state: &SessionState) -> Result<Self, LogError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| io(parent, source))?;
        }
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|source| io(path, source))?;
        let mut log = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            next_seq: 0,
        };
        log.append(Event::Created {
            version: LOG_VERSION,
            session_id: state.id.clone(),
            config: state.config.clone(),
        })?;
        Ok(log)
    }

    /// Reopens an existing log for appending after `records` entries.
    pub fn reopen(path: &Path, records: u64) -> Result<Self, LogError> {
        let file = OpenOptions::new().append(true).open(path).map_err(|source| io(path, source))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            next_seq: records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: Event) -> Result<(), LogError> {
        let record = Record {
            seq: self.next_seq,
            event,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|source| io(&self.path, source))?;
        self.next_seq += 1;
        Ok(())
    }

    /// Records one completed turn.
    pub fn turn(&mut self, patient: &Utterance, trace: &TurnTrace) -> Result<(), LogError> {
        self.append(Event::Patient {
            text: patient.text.clone(),
            segments: patient.segments.clone(),
        })?;
        self.append(Event::Reply {
            turn: trace.turn,
            text: trace.reply.clone(),
            trace_digest: trace_digest(trace),
        })
    }
}

fn io(path: &Path, source: std::io::Error) -> LogError {
    LogError::Data(DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, LogError> {
    let text = data::read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| LogError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.seq != out.len() as u64 {
            return Err(LogError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected seq {}, found {}", out.len(), rec.seq),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// A session rebuilt from its log.
#[derive(Debug)]
pub struct Replay {
    pub state: SessionState,
    pub traces: Vec<TurnTrace>,
    pub records: u64,
}

/// Re-runs every logged patient turn and checks each reply and trace digest
/// against the log.
pub fn replay(engine: &Engine, path: &Path) -> Result<Replay, LogError> {
    let records = read_records(path)?;
    let diverged = |seq: u64, message: String| LogError::Diverged {
        path: path.to_path_buf(),
        seq,
        message,
    };
    let mut iter = records.iter();
    let mut state = match iter.next().map(|r| &r.event) {
        Some(Event::Created { version, session_id, config }) => {
            if *version != LOG_VERSION {
                return Err(diverged(0, format!("unsupported log version {version}")));
            }
            SessionState::new(session_id.clone(), config.clone())
        }
        _ => return Err(diverged(0, "log does not start with a `created` event".into())),
    };
    let mut traces = Vec::new();
    let mut pending: Option<TurnTrace> = None;
    for rec in iter {
        match &rec.event {
            Event::Patient { text, segments } => {
                if pending.is_some() {
                    return Err(diverged(rec.seq, "patient event without a reply".into()));
                }
                let utterance = Utterance {
                    segments: segments.clone(),
                    ..Utterance::patient(text.clone())
                };
                let (_, trace) = run_turn_with(engine, &mut state, utterance).map_err(|e| diverged(rec.seq, e.to_string()))?;
                pending = Some(trace);
            }
            Event::Reply { turn, text, trace_digest: digest } => {
                let trace = pending.take().ok_or_else(|| diverged(rec.seq, "reply without a patient event".into()))?;
                if trace.turn != *turn || trace.reply != *text {
                    return Err(diverged(rec.seq, format!("logged reply `{text}`, replayed `{}`", trace.reply)));
                }
                if trace_digest(&trace) != *digest {
                    return Err(diverged(rec.seq, "trace digest differs".into()));
                }
                traces.push(trace);
            }
            Event::Created { .. } => return Err(diverged(rec.seq, "second `created` event".into())),
        }
    }
    if pending.is_some() {
        return Err(diverged(records.len() as u64, "log ends after a patient event".into()));
    }
    Ok(Replay {
        state,
        traces,
        records: records.len() as u64,
    })
}
