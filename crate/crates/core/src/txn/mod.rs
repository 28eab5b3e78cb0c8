//! Transaction model: stored procedures, access estimates, lifecycle, undo.
//!
//! A transaction's footprint is either declared statically by its
//! procedure or estimated by running the procedure once in reconnaissance
//! mode (no locks, no writes). Execution against a lock set validates every
//! access against the estimate; a miss widens the estimate and forces an
//! abort and restart.

mod access;
mod undo;

pub use access::{LockedAccess, ReconAccess, SerialAccess};
pub use undo::UndoLog;

use std::fmt;
use std::sync::Arc;

use crate::error::{StorageError, TxnError};
use crate::storage::{Database, RecordId, TableId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockMode {
    Shared,
    Exclusive,
}

impl LockMode {
    #[inline]
    pub fn conflicts(self, other: LockMode) -> bool {
        self == LockMode::Exclusive || other == LockMode::Exclusive
    }

    /// True when holding `self` is sufficient for a request of `wanted`.
    #[inline]
    pub fn covers(self, wanted: LockMode) -> bool {
        self >= wanted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Lexicographic (per-thread counter, thread id) pair packed into one word:
/// counter in the high 48 bits, thread id in the low 16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(u64);

impl Timestamp {
    pub fn new(counter: u64, thread: u16) -> Self {
        debug_assert!(counter < 1 << 48);
        Timestamp((counter << 16) | thread as u64)
    }

    pub fn counter(self) -> u64 {
        self.0 >> 16
    }

    pub fn thread(self) -> u16 {
        self.0 as u16
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Per-thread monotonic timestamp source.
#[derive(Debug)]
pub struct TimestampSource {
    thread: u16,
    next: u64,
}

impl TimestampSource {
    pub fn new(thread: u16) -> Self {
        TimestampSource { thread, next: 1 }
    }

    pub fn next(&mut self) -> Timestamp {
        let ts = Timestamp::new(self.next, self.thread);
        self.next += 1;
        ts
    }
}

/// Declared or estimated read/write set. Entries keep first-insertion order
/// (dynamic engines lock in procedure order); a record appears once, at the
/// strongest mode requested.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessEstimate {
    entries: Vec<(RecordId, LockMode)>,
    exact: bool,
}

impl AccessEstimate {
    pub fn new(exact: bool) -> Self {
        AccessEstimate { entries: Vec::new(), exact }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (RecordId, LockMode)>, exact: bool) -> Self {
        let mut est = AccessEstimate::new(exact);
        for (id, mode) in entries {
            est.insert(id, mode);
        }
        est
    }

    pub fn insert(&mut self, id: RecordId, mode: LockMode) {
        match self.entries.iter_mut().find(|(r, _)| *r == id) {
            Some((_, m)) => *m = (*m).max(mode),
            None => self.entries.push((id, mode)),
        }
    }

    pub fn mode_of(&self, id: RecordId) -> Option<LockMode> {
        self.entries.iter().find(|(r, _)| *r == id).map(|&(_, m)| m)
    }

    #[inline]
    pub fn covers(&self, id: RecordId, mode: LockMode) -> bool {
        self.mode_of(id).is_some_and(|m| m.covers(mode))
    }

    pub fn entries(&self) -> &[(RecordId, LockMode)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn set_exact(&mut self, exact: bool) {
        self.exact = exact;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortCause {
    /// Victim of wait-for graph or dreadlocks cycle detection.
    Deadlock,
    /// Wait-die refused to let a younger transaction wait.
    WaitDie,
    /// Accessed a record outside its OLLP estimate.
    OllpMiss,
}

impl AbortCause {
    pub const ALL: [AbortCause; 3] = [AbortCause::Deadlock, AbortCause::WaitDie, AbortCause::OllpMiss];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Early exit from a procedure. Engines turn these into aborts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxnAbort {
    Deadlock,
    WaitDie,
    EstimateMiss,
    Storage(StorageError),
}

impl TxnAbort {
    pub fn cause(&self) -> Option<AbortCause> {
        match self {
            TxnAbort::Deadlock => Some(AbortCause::Deadlock),
            TxnAbort::WaitDie => Some(AbortCause::WaitDie),
            TxnAbort::EstimateMiss => Some(AbortCause::OllpMiss),
            TxnAbort::Storage(_) => None,
        }
    }
}

impl From<StorageError> for TxnAbort {
    fn from(e: StorageError) -> Self {
        TxnAbort::Storage(e)
    }
}

/// What a procedure may do to the database. Each engine supplies its own
/// implementation (locked, dynamic-locking, reconnaissance, serial).
pub trait Access {
    /// Shared read.
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort>;
    /// Read that will be followed by a write; requests an exclusive lock up
    /// front so no upgrade is ever needed.
    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort>;
    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort>;
    /// Read of a read-only table; bypasses concurrency control.
    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort>;
    /// Write of a row whose isolation is provided by a lock the transaction
    /// already holds on a parent record (e.g. order rows under their
    /// district). Not lock-checked, but undone on abort.
    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort>;
    fn record_size(&self, table: TableId) -> usize;

    /// Read-modify-write helper.
    fn update(&mut self, id: RecordId, f: &mut dyn FnMut(&mut [u8])) -> Result<(), TxnAbort> {
        let mut buf = vec![0u8; self.record_size(id.table)];
        self.read_for_update(id, &mut buf)?;
        f(&mut buf);
        self.write(id, &buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxnClass {
    Micro,
    Transfer,
    NewOrder,
    Payment,
    Other,
}

impl TxnClass {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A deterministic stored procedure.
pub trait Procedure: Send + Sync + fmt::Debug {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort>;

    /// Footprint derivable without touching data, or `None` when it depends
    /// on database contents and needs reconnaissance.
    fn footprint(&self) -> Option<AccessEstimate>;

    fn class(&self) -> TxnClass {
        TxnClass::Other
    }

    /// A procedure that performs no accesses at all.
    fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnState {
    Pending,
    Reconnaissance,
    Locking,
    Executing,
    Committed,
    Aborted(AbortCause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessCheck {
    Ok,
    EstimateMiss,
}

pub struct Transaction {
    id: TxnId,
    procedure: Arc<dyn Procedure>,
    estimate: AccessEstimate,
    state: TxnState,
    timestamp: Option<Timestamp>,
    restart_count: u32,
    reconnoitered: bool,
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("id", &self.id)
            .field("state", &self.state)
            .field("estimate", &self.estimate)
            .field("restart_count", &self.restart_count)
            .finish()
    }
}

/// Declares a transaction. With a static lock set the estimate is exact and
/// the transaction is ready to lock; without one it must go through
/// reconnaissance first.
pub fn declare_txn(
    id: TxnId,
    procedure: Arc<dyn Procedure>,
    static_lockset: Option<AccessEstimate>,
) -> Result<Transaction, TxnError> {
    if procedure.is_empty() {
        return Err(TxnError::InvalidArgument("procedure performs no accesses"));
    }
    let (estimate, state) = match static_lockset {
        Some(est) if est.is_empty() => {
            return Err(TxnError::InvalidArgument("empty static lock set"));
        }
        Some(mut est) => {
            est.set_exact(true);
            (est, TxnState::Pending)
        }
        None => (AccessEstimate::new(false), TxnState::Reconnaissance),
    };
    Ok(Transaction {
        id,
        procedure,
        estimate,
        state,
        timestamp: None,
        restart_count: 0,
        reconnoitered: false,
    })
}

impl Transaction {
    /// Declares using the procedure's own static footprint, if any.
    pub fn new(id: TxnId, procedure: Arc<dyn Procedure>) -> Result<Self, TxnError> {
        let fp = procedure.footprint();
        declare_txn(id, procedure, fp)
    }

    pub fn id(&self) -> TxnId {
        self.id
    }

    pub fn procedure(&self) -> &Arc<dyn Procedure> {
        &self.procedure
    }

    pub fn class(&self) -> TxnClass {
        self.procedure.class()
    }

    pub fn estimate(&self) -> &AccessEstimate {
        &self.estimate
    }

    pub fn state(&self) -> TxnState {
        self.state
    }

    pub fn restart_count(&self) -> u32 {
        self.restart_count
    }

    pub fn needs_reconnaissance(&self) -> bool {
        self.state == TxnState::Reconnaissance
    }

    /// True once this logical transaction has run a reconnaissance pass.
    pub fn reconnoitered(&self) -> bool {
        self.reconnoitered
    }

    pub fn timestamp(&self) -> Option<Timestamp> {
        self.timestamp
    }

    /// Assigns the wait-die timestamp on the first attempt; later calls
    /// (restarts) keep the original.
    pub fn assign_timestamp(&mut self, source: &mut TimestampSource) -> Timestamp {
        *self.timestamp.get_or_insert_with(|| source.next())
    }

    /// Runs the procedure against live data with no locks and no writes and
    /// adopts the observed footprint as the new estimate.
    pub fn reconnaissance(&mut self, db: &Database) -> AccessEstimate {
        debug_assert_eq!(self.state, TxnState::Reconnaissance);
        let mut recon = ReconAccess::new(db);
        // Reads during reconnaissance are not consistent; a failed lookup
        // just leaves a partial footprint that execution will correct.
        let _ = self.procedure.execute(&mut recon);
        let mut est = recon.into_estimate();
        // keep anything learned from earlier misses
        for &(id, mode) in self.estimate.entries() {
            est.insert(id, mode);
        }
        est.set_exact(false);
        self.estimate = est.clone();
        self.reconnoitered = true;
        self.state = TxnState::Locking;
        est
    }

    /// Moves to the lock acquisition phase. Dynamic-locking engines use this
    /// to skip reconnaissance entirely.
    pub fn begin_locking(&mut self) {
        debug_assert!(matches!(self.state, TxnState::Pending | TxnState::Reconnaissance));
        self.state = TxnState::Locking;
    }

    pub fn begin_executing(&mut self) {
        debug_assert!(matches!(self.state, TxnState::Locking | TxnState::Executing));
        self.state = TxnState::Executing;
    }

    /// Checks a requested access against the estimate in force. On a miss the
    /// estimate is widened to include the request.
    pub fn validate_access(&mut self, id: RecordId, mode: LockMode) -> AccessCheck {
        debug_assert_eq!(self.state, TxnState::Executing);
        if self.estimate.covers(id, mode) {
            AccessCheck::Ok
        } else {
            self.estimate.insert(id, mode);
            AccessCheck::EstimateMiss
        }
    }

    /// Restores every before-image (newest first) and marks the transaction
    /// aborted. Releasing locks is left to the engine.
    pub fn abort_and_rollback(
        &mut self,
        undo: &mut UndoLog,
        db: &Database,
        cause: AbortCause,
    ) -> Result<(), TxnError> {
        match self.state {
            TxnState::Locking | TxnState::Executing => {}
            TxnState::Aborted(_) => return Err(TxnError::Internal("transaction aborted twice")),
            _ => return Err(TxnError::Internal("abort outside locking/executing")),
        }
        undo.rollback(db)?;
        self.state = TxnState::Aborted(cause);
        Ok(())
    }

    /// Prepares an aborted transaction for another attempt with the same id,
    /// timestamp and (possibly widened) estimate.
    pub fn restart(&mut self) {
        debug_assert!(matches!(self.state, TxnState::Aborted(_)));
        self.restart_count += 1;
        self.state = TxnState::Pending;
    }

    pub fn commit(&mut self) {
        debug_assert_eq!(self.state, TxnState::Executing);
        self.state = TxnState::Committed;
    }
}
