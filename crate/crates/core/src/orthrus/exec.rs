use std::sync::Arc;

use super::{build_request_chain, ChainMsg, Inbox, LockChain, Outbox, ToCc, ToExec};
use crate::engine::FeedCursor;
use crate::metrics::{Phase, PhaseClock, WorkerCounters};
use crate::storage::{Database, PartitionMap};
use crate::txn::{AbortCause, LockedAccess, Transaction, TxnAbort, UndoLog};
use crate::verify::{Event, EventKind, EventLog};

struct InFlight {
    txn: Transaction,
    owner: u64,
    chain: Arc<LockChain>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub admitted: u64,
    pub committed: u64,
    pub ollp_restarts: u64,
    pub grants: u64,
    pub acquire_messages: u64,
    pub release_messages: u64,
    /// Grants whose hop count differed from the chain's prediction.
    pub hop_mismatches: u64,
    pub idle_ticks: u64,
    pub wait_ticks: u64,
}

/// An execution thread's state: up to `inflight` transactions, each either
/// waiting for its lock chain or ready to run.
pub struct ExecWorker {
    id: usize,
    map: PartitionMap,
    db: Arc<Database>,
    cursor: FeedCursor,
    log: Option<EventLog>,
    to_cc: Vec<Outbox<ToCc>>,
    from_cc: Vec<Inbox<ToExec>>,
    slots: Vec<Option<InFlight>>,
    ready: Vec<u16>,
    undo: UndoLog,
    next_owner: u64,
    outstanding_acks: u64,
    feed_done: bool,
    stats: ExecStats,
}

impl ExecWorker {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        inflight: usize,
        map: PartitionMap,
        db: Arc<Database>,
        cursor: FeedCursor,
        log: Option<EventLog>,
        to_cc: Vec<Outbox<ToCc>>,
        from_cc: Vec<Inbox<ToExec>>,
    ) -> Self {
        ExecWorker {
            id,
            map,
            db,
            cursor,
            log,
            to_cc,
            from_cc,
            slots: (0..inflight).map(|_| None).collect(),
            ready: Vec::with_capacity(inflight),
            undo: UndoLog::default(),
            next_owner: 0,
            outstanding_acks: 0,
            feed_done: false,
            stats: ExecStats::default(),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn stats(&self) -> ExecStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Feed exhausted, nothing in flight, every release acknowledged.
    pub fn finished(&self) -> bool {
        self.feed_done
            && self.in_flight() == 0
            && self.outstanding_acks == 0
            && self.to_cc.iter().all(|o| o.parked() == 0)
    }

    pub fn into_events(self) -> Vec<Event> {
        self.log.map(EventLog::into_events).unwrap_or_default()
    }

    fn fresh_owner(&mut self) -> u64 {
        self.next_owner += 1;
        ((self.id as u64 + 1) << 40) | self.next_owner
    }

    /// One scheduling quantum: drain responses, run granted transactions,
    /// and otherwise admit a new one. Returns true if anything happened.
    pub fn step(&mut self, counters: &WorkerCounters, clock: &mut PhaseClock) -> bool {
        clock.switch(Phase::Messaging);
        let mut progress = false;
        for o in self.to_cc.iter_mut() {
            progress |= o.flush();
        }
        for q in 0..self.from_cc.len() {
            while let Some(msg) = self.from_cc[q].recv() {
                progress = true;
                match msg {
                    ToExec::Granted { slot, owner, hops } => {
                        let f = self.slots[slot as usize].as_ref().expect("grant for an empty slot");
                        assert_eq!(f.owner, owner, "grant for a stale owner");
                        let predicted = f.chain.predicted_messages() as u64;
                        if hops as u64 != predicted {
                            self.stats.hop_mismatches += 1;
                        }
                        self.stats.grants += 1;
                        self.stats.acquire_messages += hops as u64;
                        counters.acquire_messages(hops as u64);
                        self.ready.push(slot);
                    }
                    ToExec::ReleaseAck { .. } => {
                        self.outstanding_acks -= 1;
                        self.stats.release_messages += 1;
                        counters.release_messages(1);
                    }
                }
            }
        }

        if !self.ready.is_empty() {
            while let Some(slot) = self.ready.pop() {
                self.run_slot(slot as usize, counters, clock);
            }
            return true;
        }

        if !self.feed_done {
            if let Some(slot) = self.slots.iter().position(Option::is_none) {
                clock.switch(Phase::Execute);
                match self.cursor.next_txn() {
                    Some((id, procedure)) => {
                        let class = procedure.class();
                        counters.start(class);
                        let mut txn = Transaction::new(id, procedure).expect("workloads generate valid transactions");
                        if txn.needs_reconnaissance() {
                            counters.reconnaissance(class);
                            txn.reconnaissance(&self.db);
                        } else {
                            txn.begin_locking();
                        }
                        self.stats.admitted += 1;
                        self.send_chain(slot, txn, clock);
                        return true;
                    }
                    None => self.feed_done = true,
                }
            }
        }

        if progress {
            return true;
        }
        if self.in_flight() > 0 || self.outstanding_acks > 0 {
            self.stats.wait_ticks += 1;
            clock.switch(Phase::LockWait);
        } else {
            self.stats.idle_ticks += 1;
            clock.switch(Phase::Idle);
        }
        false
    }

    fn send_chain(&mut self, slot: usize, txn: Transaction, clock: &mut PhaseClock) {
        let (chain, _) = build_request_chain(txn.estimate(), &self.map);
        let chain = Arc::new(chain);
        let owner = self.fresh_owner();
        clock.switch(Phase::Messaging);
        if chain.segments.is_empty() {
            // nothing to lock yet; execution will miss and widen
            self.ready.push(slot as u16);
        } else {
            let first = chain.segments[0].cc as usize;
            self.to_cc[first].send(ToCc::Acquire(ChainMsg {
                owner,
                exec: self.id as u16,
                slot: slot as u16,
                chain: Arc::clone(&chain),
                cursor: 0,
                hops: 1,
            }));
        }
        self.slots[slot] = Some(InFlight { txn, owner, chain });
    }

    fn release(&mut self, owner: u64, chain: &LockChain, counters: &WorkerCounters) {
        for s in &chain.segments {
            self.to_cc[s.cc as usize].send(ToCc::Release { owner, exec: self.id as u16 });
        }
        let n = chain.segments.len() as u64;
        self.outstanding_acks += n;
        self.stats.release_messages += n;
        counters.release_messages(n);
    }

    fn run_slot(&mut self, slot: usize, counters: &WorkerCounters, clock: &mut PhaseClock) {
        clock.switch(Phase::Execute);
        let InFlight { mut txn, owner, chain } = self.slots[slot].take().expect("ready slot is occupied");
        let id = txn.id();
        let class = txn.class();
        if let Some(log) = self.log.as_mut() {
            log.record(id, EventKind::Begin);
        }
        txn.begin_executing();
        let procedure = Arc::clone(txn.procedure());
        let result = {
            let mut ctx = LockedAccess::new(&self.db, &mut txn, &mut self.undo, self.log.as_mut());
            procedure.execute(&mut ctx)
        };
        match result {
            Ok(()) => {
                if let Some(log) = self.log.as_mut() {
                    log.record(id, EventKind::Commit);
                }
                txn.commit();
                self.undo.clear();
                counters.commit(class);
                self.stats.committed += 1;
                clock.switch(Phase::Messaging);
                self.release(owner, &chain, counters);
            }
            Err(TxnAbort::EstimateMiss) => {
                txn.abort_and_rollback(&mut self.undo, &self.db, AbortCause::OllpMiss).expect("rollback");
                if let Some(log) = self.log.as_mut() {
                    log.record(id, EventKind::Abort);
                }
                counters.abort(AbortCause::OllpMiss);
                self.stats.ollp_restarts += 1;
                clock.switch(Phase::Messaging);
                self.release(owner, &chain, counters);
                txn.restart();
                txn.begin_locking();
                self.send_chain(slot, txn, clock);
            }
            Err(other) => panic!("orthrus: unexpected abort {other:?} in {id}"),
        }
    }
}
