//! Conflated 2PL engine: every worker thread runs transaction logic and
//! manipulates the shared lock table itself.

use std::sync::Arc;

use crossbeam_utils::Backoff;

use super::{ordered_lockset, AcquireOutcome, DeadlockPolicy, LockManager, TxnLocks, WaitStatus};
use crate::engine::{EngineConfig, FeedCursor, Launch, WorkerHandle};
use crate::metrics::{Phase, PhaseClock, WorkerCounters, WorkerRole};
use crate::storage::{Database, RecordId, TableId};
use crate::txn::{
    AbortCause, Access, LockMode, LockedAccess, Transaction, TimestampSource, TxnAbort, TxnId, UndoLog,
};
use crate::verify::{Event, EventKind, EventLog};

/// Locks at most this many records per transaction without reallocation.
const EXPECTED_LOCKS_PER_TXN: usize = 64;

pub fn spawn_two_phase(cfg: &EngineConfig, policy: DeadlockPolicy, launch: &mut Launch) -> Vec<WorkerHandle> {
    let lm = Arc::new(
        LockManager::new(policy, cfg.workers, cfg.workers * EXPECTED_LOCKS_PER_TXN)
            .with_sweep_interval(cfg.waitfor_sweep),
    );
    (0..cfg.workers)
        .map(|w| {
            let lm = Arc::clone(&lm);
            let db = Arc::clone(&launch.db);
            let mut cursor = FeedCursor::new(launch.feed.clone(), Arc::clone(&launch.control), w);
            let log = launch.recorder.as_ref().map(|r| r.log());
            launch.spawn(format!("{}-{w}", policy.name()), WorkerRole::Execution, move |counters| {
                worker_loop(w, &lm, &db, &mut cursor, counters, log)
            })
        })
        .collect()
}

/// Blocks on an outstanding request, polling the policy's detector.
fn wait_for_grant(lm: &LockManager, locks: &mut TxnLocks, clock: &mut PhaseClock) -> WaitStatus {
    clock.switch(Phase::LockWait);
    let backoff = Backoff::new();
    loop {
        match lm.poll(locks) {
            WaitStatus::Waiting => {
                backoff.snooze();
                clock.switch(Phase::LockWait);
            }
            done => return done,
        }
    }
}

/// Lock-as-you-go access used by the deadlock-handling policies.
struct DynamicAccess<'a, 'c> {
    db: &'a Database,
    lm: &'a LockManager,
    locks: &'a mut TxnLocks,
    undo: &'a mut UndoLog,
    log: Option<&'a mut EventLog>,
    clock: &'a mut PhaseClock<'c>,
    scratch: Vec<u8>,
}

impl DynamicAccess<'_, '_> {
    fn lock(&mut self, id: RecordId, mode: LockMode) -> Result<(), TxnAbort> {
        if self.locks.held_mode(id).is_some_and(|m| m.covers(mode)) {
            return Ok(());
        }
        self.clock.switch(Phase::LockManager);
        let out = self.lm.acquire(self.locks, id, mode).unwrap_or_else(|e| panic!("{e}"));
        let granted = match out {
            AcquireOutcome::Granted => true,
            AcquireOutcome::AbortDeadlock => false,
            AcquireOutcome::MustWait => wait_for_grant(self.lm, self.locks, self.clock) == WaitStatus::Granted,
        };
        self.clock.switch(Phase::Execute);
        if granted {
            Ok(())
        } else if self.lm.policy() == DeadlockPolicy::WaitDie {
            Err(TxnAbort::WaitDie)
        } else {
            Err(TxnAbort::Deadlock)
        }
    }

    fn log(&mut self, kind: EventKind) {
        if let Some(log) = self.log.as_deref_mut() {
            log.record(self.locks.txn(), kind);
        }
    }

    fn capture(&mut self, id: RecordId) -> Result<(), TxnAbort> {
        self.scratch.resize(self.db.record_size(id.table), 0);
        self.db.read_into(id, &mut self.scratch)?;
        self.undo.capture(id, &self.scratch);
        Ok(())
    }
}

impl Access for DynamicAccess<'_, '_> {
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.lock(id, LockMode::Shared)?;
        self.db.read_into(id, buf)?;
        self.log(EventKind::Read(id));
        Ok(())
    }

    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.lock(id, LockMode::Exclusive)?;
        self.db.read_into(id, buf)?;
        self.log(EventKind::Read(id));
        Ok(())
    }

    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.lock(id, LockMode::Exclusive)?;
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

fn record(log: &mut Option<EventLog>, txn: TxnId, kind: EventKind) {
    if let Some(log) = log.as_mut() {
        log.record(txn, kind);
    }
}

fn worker_loop(
    w: usize,
    lm: &LockManager,
    db: &Database,
    cursor: &mut FeedCursor,
    counters: &WorkerCounters,
    mut log: Option<EventLog>,
) -> Vec<Event> {
    let policy = lm.policy();
    let mut clock = PhaseClock::new(counters, Phase::Idle);
    let mut locks = lm.txn_locks(w);
    let mut undo = UndoLog::default();
    let mut stamps = TimestampSource::new(w as u16);
    let mut ordered = Vec::with_capacity(EXPECTED_LOCKS_PER_TXN);

    while let Some((id, procedure)) = cursor.next_txn() {
        let class = procedure.class();
        counters.start(class);
        let mut txn = Transaction::new(id, procedure).expect("workloads generate valid transactions");
        let ts = txn.assign_timestamp(&mut stamps);
        loop {
            clock.switch(Phase::Execute);
            lm.begin(&mut locks, id, ts);
            record(&mut log, id, EventKind::Begin);
            let result = if policy == DeadlockPolicy::DeadlockFree {
                if txn.needs_reconnaissance() {
                    if !txn.reconnoitered() {
                        counters.reconnaissance(class);
                    }
                    txn.reconnaissance(db);
                } else {
                    txn.begin_locking();
                }
                ordered.clear();
                ordered.extend(ordered_lockset(txn.estimate()));
                clock.switch(Phase::LockManager);
                for &(rid, mode) in &ordered {
                    let out = lm.acquire(&mut locks, rid, mode).expect("ordered lock sets never upgrade");
                    if out == AcquireOutcome::MustWait {
                        let status = wait_for_grant(lm, &mut locks, &mut clock);
                        debug_assert_eq!(status, WaitStatus::Granted);
                        clock.switch(Phase::LockManager);
                    }
                }
                clock.switch(Phase::Execute);
                txn.begin_executing();
                let procedure = Arc::clone(txn.procedure());
                let mut ctx = LockedAccess::new(db, &mut txn, &mut undo, log.as_mut());
                procedure.execute(&mut ctx)
            } else {
                txn.begin_locking();
                txn.begin_executing();
                let mut ctx = DynamicAccess {
                    db,
                    lm,
                    locks: &mut locks,
                    undo: &mut undo,
                    log: log.as_mut(),
                    clock: &mut clock,
                    scratch: Vec::new(),
                };
                txn.procedure().execute(&mut ctx)
            };
            match result {
                Ok(()) => {
                    record(&mut log, id, EventKind::Commit);
                    txn.commit();
                    undo.clear();
                    clock.switch(Phase::LockManager);
                    lm.release_all(&mut locks);
                    counters.commit(class);
                    break;
                }
                Err(abort) => {
                    let cause = match abort {
                        TxnAbort::Storage(e) => panic!("{}: storage error in {id}: {e}", policy.name()),
                        other => other.cause().expect("non-storage aborts have a cause"),
                    };
                    txn.abort_and_rollback(&mut undo, db, cause).expect("rollback of a live transaction");
                    record(&mut log, id, EventKind::Abort);
                    clock.switch(Phase::LockManager);
                    lm.release_all(&mut locks);
                    counters.abort(cause);
                    txn.restart();
                    if cause == AbortCause::OllpMiss {
                        // the widened estimate is used as is on the next attempt
                        debug_assert!(!txn.needs_reconnaissance());
                    }
                }
            }
        }
        clock.switch(Phase::Idle);
    }
    drop(clock);
    log.map(EventLog::into_events).unwrap_or_default()
}
