//! Structured event log shared by the controller and the agent.
//!
//! One line per event:
//! `ts=<us> ris=<id> ev=<setup|sub|ind|ctl|ack|fault> seq=<n> detail=<text>`

use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogLevel {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

impl LogLevel {
    pub fn parse(s: &str) -> Option<LogLevel> {
        match s {
            "error" => Some(LogLevel::Error),
            "warn" => Some(LogLevel::Warn),
            "info" => Some(LogLevel::Info),
            "debug" => Some(LogLevel::Debug),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Setup,
    Sub,
    Ind,
    Ctl,
    Ack,
    Fault,
}

impl Event {
    pub fn as_str(&self) -> &'static str {
        match self {
            Event::Setup => "setup",
            Event::Sub => "sub",
            Event::Ind => "ind",
            Event::Ctl => "ctl",
            Event::Ack => "ack",
            Event::Fault => "fault",
        }
    }

    fn level(&self) -> LogLevel {
        match self {
            Event::Fault => LogLevel::Warn,
            _ => LogLevel::Info,
        }
    }
}

pub fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

/// Event sink: filters stderr echo by level and optionally keeps every line
/// for later inspection (session logs, loop tests).
#[derive(Debug, Clone)]
pub struct EventLog {
    stderr_level: LogLevel,
    lines: Option<Arc<Mutex<Vec<String>>>>,
}

impl EventLog {
    pub fn new(stderr_level: LogLevel) -> Self {
        Self {
            stderr_level,
            lines: None,
        }
    }

    /// Silent log that only collects lines in memory.
    pub fn collecting() -> Self {
        Self {
            stderr_level: LogLevel::Error,
            lines: Some(Arc::new(Mutex::new(Vec::new()))),
        }
    }

    pub fn with_collector(mut self) -> Self {
        self.lines = Some(Arc::new(Mutex::new(Vec::new())));
        self
    }

    pub fn event(&self, ris_id: u32, ev: Event, seq: u64, detail: &str) {
        let line = format!(
            "ts={} ris={} ev={} seq={} detail={}",
            now_us(),
            ris_id,
            ev.as_str(),
            seq,
            detail.replace('\n', " ")
        );
        if ev.level() <= self.stderr_level {
            eprintln!("{line}");
        }
        if let Some(lines) = &self.lines {
            lines.lock().unwrap().push(line);
        }
    }

    /// Snapshot of every collected line (empty when not collecting).
    pub fn lines(&self) -> Vec<String> {
        self.lines
            .as_ref()
            .map(|l| l.lock().unwrap().clone())
            .unwrap_or_default()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new(LogLevel::Warn)
    }
}
