use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::VerifyError;
use crate::storage::{RecordId, TableId};
use crate::txn::TxnId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Begin,
    Read(RecordId),
    Write(RecordId),
    Commit,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub txn: TxnId,
    pub kind: EventKind,
}

/// Shared sequence source for history recording. Events are stamped while
/// the recording thread holds the lock that orders the access, so sequence
/// order agrees with conflict order. Only the first `limit` events are kept.
#[derive(Debug)]
pub struct HistoryRecorder {
    seq: AtomicU64,
    limit: u64,
}

impl HistoryRecorder {
    pub fn new(limit: u64) -> Arc<Self> {
        Arc::new(HistoryRecorder { seq: AtomicU64::new(0), limit })
    }

    pub fn log(self: &Arc<Self>) -> EventLog {
        EventLog { recorder: Arc::clone(self), events: Vec::new() }
    }
}

/// Per-thread event buffer.
#[derive(Debug)]
pub struct EventLog {
    recorder: Arc<HistoryRecorder>,
    events: Vec<Event>,
}

impl EventLog {
    #[inline]
    pub fn record(&mut self, txn: TxnId, kind: EventKind) {
        let seq = self.recorder.seq.fetch_add(1, Ordering::SeqCst);
        if seq < self.recorder.limit {
            self.events.push(Event { seq, txn, kind });
        }
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Globally ordered event sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    events: Vec<Event>,
}

impl History {
    pub fn new(events: Vec<Event>) -> Self {
        History { events }
    }

    /// Merges per-thread logs into sequence order.
    pub fn merge(logs: impl IntoIterator<Item = Vec<Event>>) -> Self {
        let mut events: Vec<Event> = logs.into_iter().flatten().collect();
        events.sort_by_key(|e| e.seq);
        History { events }
    }

    /// Builds a history from `(txn, kind)` pairs in the given order.
    pub fn from_ops(ops: impl IntoIterator<Item = (u64, EventKind)>) -> Self {
        let events = ops
            .into_iter()
            .enumerate()
            .map(|(i, (t, kind))| Event { seq: i as u64, txn: TxnId(t), kind })
            .collect();
        History { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn committed_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Commit).count()
    }

    /// One line per event: `seq txn op [table:key]` with op in `B R W C A`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            match e.kind {
                EventKind::Begin => writeln!(w, "{} {} B", e.seq, e.txn.0)?,
                EventKind::Commit => writeln!(w, "{} {} C", e.seq, e.txn.0)?,
                EventKind::Abort => writeln!(w, "{} {} A", e.seq, e.txn.0)?,
                EventKind::Read(id) => writeln!(w, "{} {} R {}", e.seq, e.txn.0, id)?,
                EventKind::Write(id) => writeln!(w, "{} {} W {}", e.seq, e.txn.0, id)?,
            }
        }
        Ok(())
    }

    pub fn parse(r: impl BufRead) -> Result<History, VerifyError> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let err = |msg: &str| VerifyError::Parse { line: line_no, msg: msg.to_string() };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let seq = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad seq"))?;
            let txn = fields.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad txn id"))?;
            let op = fields.next().ok_or_else(|| err("missing op"))?;
            let mut key = || -> Result<RecordId, VerifyError> {
                let f = fields.next().ok_or_else(|| err("missing key"))?;
                let (t, k) = f.split_once(':').ok_or_else(|| err("key must be table:key"))?;
                let t = t.parse().map_err(|_| err("bad table id"))?;
                let k = k.parse().map_err(|_| err("bad key"))?;
                Ok(RecordId::new(TableId(t), k))
            };
            let kind = match op {
                "B" => EventKind::Begin,
                "C" => EventKind::Commit,
                "A" => EventKind::Abort,
                "R" => EventKind::Read(key()?),
                "W" => EventKind::Write(key()?),
                _ => return Err(err("unknown op")),
            };
            events.push(Event { seq, txn: TxnId(txn), kind });
        }
        for w in events.windows(2) {
            if w[1].seq <= w[0].seq {
                return Err(VerifyError::Parse {
                    line: 0,
                    msg: format!("sequence numbers not increasing at {}", w[1].seq),
                });
            }
        }
        Ok(History { events })
    }
}
