//! Partitioned store: one worker and one coarse spinlock per data
//! partition. A transaction takes the spinlocks of every partition it
//! touches, in ascending order, and then runs without record-level locks.

use std::sync::Arc;

use crossbeam_utils::{Backoff, CachePadded};

use crate::engine::{EngineConfig, FeedCursor, Launch, WorkerHandle};
use crate::lockmgr::{SpinGuard, SpinLatch};
use crate::metrics::{Phase, PhaseClock, WorkerCounters, WorkerRole};
use crate::storage::{Database, PartitionMap, RecordId, TableId};
use crate::txn::{
    AbortCause, Access, AccessCheck, AccessEstimate, LockMode, Transaction, TxnAbort, UndoLog,
};
use crate::verify::{Event, EventKind, EventLog};

/// Distinct partitions touched by `estimate`, ascending.
pub fn plan_partition_locks(estimate: &AccessEstimate, map: &PartitionMap) -> Vec<usize> {
    let mut parts: Vec<usize> = estimate.entries().iter().map(|&(id, _)| map.partition_of(id)).collect();
    parts.sort_unstable();
    parts.dedup();
    parts
}

pub fn spawn(cfg: &EngineConfig, launch: &mut Launch) -> Vec<WorkerHandle> {
    let latches: Arc<[CachePadded<SpinLatch<()>>]> =
        (0..cfg.workers).map(|_| CachePadded::new(SpinLatch::new(()))).collect();
    let map = cfg.partition;
    (0..cfg.workers)
        .map(|w| {
            let latches = Arc::clone(&latches);
            let db = Arc::clone(&launch.db);
            let mut cursor = FeedCursor::new(launch.feed.clone(), Arc::clone(&launch.control), w);
            let log = launch.recorder.as_ref().map(|r| r.log());
            launch.spawn(format!("pstore-{w}"), WorkerRole::Execution, move |counters| {
                worker_loop(&latches, map, &db, &mut cursor, counters, log)
            })
        })
        .collect()
}

struct PartitionAccess<'a> {
    db: &'a Database,
    map: PartitionMap,
    locked: &'a [usize],
    txn: &'a mut Transaction,
    undo: &'a mut UndoLog,
    log: Option<&'a mut EventLog>,
    scratch: Vec<u8>,
}

impl PartitionAccess<'_> {
    fn check(&mut self, id: RecordId, mode: LockMode) -> Result<(), TxnAbort> {
        if self.locked.binary_search(&self.map.partition_of(id)).is_ok() {
            return Ok(());
        }
        // widens the estimate so the next plan covers the partition
        match self.txn.validate_access(id, mode) {
            AccessCheck::Ok => unreachable!("estimate entries always have their partition locked"),
            AccessCheck::EstimateMiss => Err(TxnAbort::EstimateMiss),
        }
    }

    fn log(&mut self, kind: EventKind) {
        if let Some(log) = self.log.as_deref_mut() {
            log.record(self.txn.id(), kind);
        }
    }

    fn apply(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.scratch.resize(self.db.record_size(id.table), 0);
        self.db.read_into(id, &mut self.scratch)?;
        self.undo.capture(id, &self.scratch);
        self.db.write(id, payload)?;
        self.log(EventKind::Write(id));
        Ok(())
    }
}

impl Access for PartitionAccess<'_> {
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
        self.apply(id, payload)
    }

    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.check(id, LockMode::Exclusive)?;
        self.apply(id, payload)
    }

    fn record_size(&self, table: TableId) -> usize {
        self.db.record_size(table)
    }
}

fn lock_all<'a>(
    latches: &'a [CachePadded<SpinLatch<()>>],
    plan: &[usize],
    guards: &mut Vec<SpinGuard<'a, ()>>,
    clock: &mut PhaseClock,
) {
    for &p in plan {
        clock.switch(Phase::LockManager);
        let guard = match latches[p].try_lock() {
            Some(g) => g,
            None => {
                clock.switch(Phase::LockWait);
                let backoff = Backoff::new();
                loop {
                    if let Some(g) = latches[p].try_lock() {
                        break g;
                    }
                    backoff.snooze();
                    clock.switch(Phase::LockWait);
                }
            }
        };
        guards.push(guard);
    }
}

fn worker_loop(
    latches: &[CachePadded<SpinLatch<()>>],
    map: PartitionMap,
    db: &Database,
    cursor: &mut FeedCursor,
    counters: &WorkerCounters,
    mut log: Option<EventLog>,
) -> Vec<Event> {
    let mut clock = PhaseClock::new(counters, Phase::Idle);
    let mut undo = UndoLog::default();
    let mut guards: Vec<SpinGuard<'_, ()>> = Vec::with_capacity(latches.len());

    while let Some((id, procedure)) = cursor.next_txn() {
        let class = procedure.class();
        counters.start(class);
        let mut txn = Transaction::new(id, procedure).expect("workloads generate valid transactions");
        loop {
            clock.switch(Phase::Execute);
            if txn.needs_reconnaissance() {
                if !txn.reconnoitered() {
                    counters.reconnaissance(class);
                }
                txn.reconnaissance(db);
            } else {
                txn.begin_locking();
            }
            let plan = plan_partition_locks(txn.estimate(), &map);
            lock_all(latches, &plan, &mut guards, &mut clock);
            clock.switch(Phase::Execute);
            if let Some(log) = log.as_mut() {
                log.record(id, EventKind::Begin);
            }
            txn.begin_executing();
            let procedure = Arc::clone(txn.procedure());
            let result = {
                let mut ctx = PartitionAccess {
                    db,
                    map,
                    locked: &plan,
                    txn: &mut txn,
                    undo: &mut undo,
                    log: log.as_mut(),
                    scratch: Vec::new(),
                };
                procedure.execute(&mut ctx)
            };
            let done = match result {
                Ok(()) => {
                    if let Some(log) = log.as_mut() {
                        log.record(id, EventKind::Commit);
                    }
                    txn.commit();
                    undo.clear();
                    counters.commit(class);
                    true
                }
                Err(TxnAbort::EstimateMiss) => {
                    txn.abort_and_rollback(&mut undo, db, AbortCause::OllpMiss).expect("rollback");
                    if let Some(log) = log.as_mut() {
                        log.record(id, EventKind::Abort);
                    }
                    counters.abort(AbortCause::OllpMiss);
                    txn.restart();
                    false
                }
                Err(other) => panic!("pstore: unexpected abort {other:?} in {id}"),
            };
            clock.switch(Phase::LockManager);
            while guards.pop().is_some() {}
            if done {
                break;
            }
        }
        clock.switch(Phase::Idle);
    }
    drop(clock);
    log.map(EventLog::into_events).unwrap_or_default()
}
