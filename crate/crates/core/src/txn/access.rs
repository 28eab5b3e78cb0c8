use super::{Access, AccessCheck, AccessEstimate, LockMode, Transaction, TxnAbort, UndoLog};
use crate::storage::{Database, RecordId, TableId};
use crate::verify::{EventKind, EventLog};

/// Lock-free dry run that records the footprint. Writes are buffered so the
/// procedure sees its own writes, but nothing reaches the database.
pub struct ReconAccess<'a> {
    db: &'a Database,
    estimate: AccessEstimate,
    buffered: Vec<(RecordId, Vec<u8>)>,
}

impl<'a> ReconAccess<'a> {
    pub fn new(db: &'a Database) -> Self {
        ReconAccess { db, estimate: AccessEstimate::new(false), buffered: Vec::new() }
    }

    pub fn into_estimate(self) -> AccessEstimate {
        self.estimate
    }

    fn fetch(&self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        if let Some((_, v)) = self.buffered.iter().rev().find(|(r, _)| *r == id) {
            buf.copy_from_slice(v);
            return Ok(());
        }
        Ok(self.db.read_into(id, buf)?)
    }
}

impl Access for ReconAccess<'_> {
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.estimate.insert(id, LockMode::Shared);
        self.fetch(id, buf)
    }

    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.estimate.insert(id, LockMode::Exclusive);
        self.fetch(id, buf)
    }

    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.estimate.insert(id, LockMode::Exclusive);
        self.buffered.push((id, payload.to_vec()));
        Ok(())
    }

    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.buffered.push((id, payload.to_vec()));
        Ok(())
    }

    fn record_size(&self, table: TableId) -> usize {
        self.db.record_size(table)
    }
}

/// Execution with every lock of the estimate already held. Each access is
/// validated against the estimate; writes are applied in place with
/// before-image capture.
pub struct LockedAccess<'a> {
    db: &'a Database,
    txn: &'a mut Transaction,
    undo: &'a mut UndoLog,
    log: Option<&'a mut EventLog>,
    scratch: Vec<u8>,
}

impl<'a> LockedAccess<'a> {
    pub fn new(
        db: &'a Database,
        txn: &'a mut Transaction,
        undo: &'a mut UndoLog,
        log: Option<&'a mut EventLog>,
    ) -> Self {
        LockedAccess { db, txn, undo, log, scratch: Vec::new() }
    }

    #[inline]
    fn check(&mut self, id: RecordId, mode: LockMode) -> Result<(), TxnAbort> {
        match self.txn.validate_access(id, mode) {
            AccessCheck::Ok => Ok(()),
            AccessCheck::EstimateMiss => Err(TxnAbort::EstimateMiss),
        }
    }

    fn log(&mut self, kind: EventKind) {
        if let Some(log) = self.log.as_deref_mut() {
            log.record(self.txn.id(), kind);
        }
    }

    fn capture(&mut self, id: RecordId) -> Result<(), TxnAbort> {
        self.scratch.resize(self.db.record_size(id.table), 0);
        self.db.read_into(id, &mut self.scratch)?;
        self.undo.capture(id, &self.scratch);
        Ok(())
    }
}

impl Access for LockedAccess<'_> {
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.check(id, LockMode::Shared)?;
        self.db.read_into(id, buf)?;
        self.log(EventKind::Read(id));
        Ok(())
    }

    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.check(id, LockMode::Exclusive)?;
        self.db.read_into(id, buf)?;
        self.log(EventKind::Read(id));
        Ok(())
    }

    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.check(id, LockMode::Exclusive)?;
        self.capture(id)?;
        self.db.write(id, payload)?;
        self.log(EventKind::Write(id));
        Ok(())
    }

    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.capture(id)?;
        self.db.write(id, payload)?;
        self.log(EventKind::Write(id));
        Ok(())
    }

    fn record_size(&self, table: TableId) -> usize {
        self.db.record_size(table)
    }
}

/// Direct access with no concurrency control, for one-at-a-time replay.
pub struct SerialAccess<'a> {
    db: &'a Database,
}

impl<'a> SerialAccess<'a> {
    pub fn new(db: &'a Database) -> Self {
        SerialAccess { db }
    }
}

impl Access for SerialAccess<'_> {
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        Ok(self.db.write(id, payload)?)
    }

    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        Ok(self.db.write(id, payload)?)
    }

    fn record_size(&self, table: TableId) -> usize {
        self.db.record_size(table)
    }
}
