use std::thread::ThreadId;

use rustc_hash::FxHashMap;

use super::{ChainMsg, Inbox, Outbox, ToCc, ToExec};
use crate::metrics::{Phase, PhaseClock};
use crate::storage::RecordId;
use crate::txn::LockMode;

/// Messages taken from one input queue before moving to the next, so no
/// producer can starve the others.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy)]
struct Req {
    owner: u64,
    mode: LockMode,
    granted: bool,
}

struct Active {
    msg: ChainMsg,
    waiting: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CcStats {
    pub acquires: u64,
    pub releases: u64,
    pub forwards: u64,
    pub replies: u64,
    pub acks: u64,
    pub unknown_releases: u64,
}

/// A concurrency-control thread's state. The lock table is owned outright:
/// no other thread can reach it.
pub struct CcWorker {
    id: usize,
    from_exec: Vec<Inbox<ToCc>>,
    from_peers: Vec<Inbox<ToCc>>,
    to_peers: Vec<Option<Outbox<ToCc>>>,
    to_exec: Vec<Outbox<ToExec>>,
    table: FxHashMap<RecordId, Vec<Req>>,
    active: FxHashMap<u64, Active>,
    pool: Vec<Vec<Req>>,
    promoted: Vec<u64>,
    stats: CcStats,
    owner_thread: Option<ThreadId>,
}

impl CcWorker {
    pub fn new(
        id: usize,
        from_exec: Vec<Inbox<ToCc>>,
        from_peers: Vec<Inbox<ToCc>>,
        to_peers: Vec<Option<Outbox<ToCc>>>,
        to_exec: Vec<Outbox<ToExec>>,
    ) -> Self {
        CcWorker {
            id,
            from_exec,
            from_peers,
            to_peers,
            to_exec,
            table: FxHashMap::default(),
            active: FxHashMap::default(),
            pool: Vec::new(),
            promoted: Vec::new(),
            stats: CcStats::default(),
            owner_thread: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn stats(&self) -> CcStats {
        self.stats
    }

    /// Chains currently holding or waiting for locks here.
    pub fn active_chains(&self) -> usize {
        self.active.len()
    }

    /// Chains parked here waiting for a local grant.
    pub fn waiting_chains(&self) -> usize {
        self.active.values().filter(|a| a.waiting > 0).count()
    }

    pub fn locked_records(&self) -> usize {
        self.table.len()
    }

    /// True when no input is queued and no output is parked.
    pub fn drained(&self) -> bool {
        self.from_exec.iter().all(Inbox::is_empty)
            && self.from_peers.iter().all(Inbox::is_empty)
            && self.to_exec.iter().all(|o| o.parked() == 0)
            && self.to_peers.iter().flatten().all(|o| o.parked() == 0)
    }

    /// One scheduling quantum. Returns true if any message moved.
    pub fn step(&mut self, clock: &mut PhaseClock) -> bool {
        let me = std::thread::current().id();
        debug_assert!(*self.owner_thread.get_or_insert(me) == me, "CC partition touched by a second thread");
        clock.switch(Phase::Messaging);
        let mut progress = false;
        for o in self.to_exec.iter_mut() {
            progress |= o.flush();
        }
        for o in self.to_peers.iter_mut().flatten() {
            progress |= o.flush();
        }
        // peers first: their chains already hold grants elsewhere
        for q in 0..self.from_peers.len() {
            for _ in 0..BATCH {
                let Some(msg) = self.from_peers[q].recv() else { break };
                clock.switch(Phase::LockManager);
                self.handle(msg);
                progress = true;
            }
        }
        for q in 0..self.from_exec.len() {
            for _ in 0..BATCH {
                let Some(msg) = self.from_exec[q].recv() else { break };
                clock.switch(Phase::LockManager);
                self.handle(msg);
                progress = true;
            }
        }
        clock.switch(if progress { Phase::LockManager } else { Phase::Idle });
        progress
    }

    fn handle(&mut self, msg: ToCc) {
        match msg {
            ToCc::Acquire(m) => self.process_acquire(m),
            ToCc::Release { owner, exec } => self.process_release(owner, exec),
        }
    }

    /// Inserts requests for every local record of the chain; forwards or
    /// replies once all of them are granted.
    pub fn process_acquire(&mut self, msg: ChainMsg) {
        self.stats.acquires += 1;
        let seg = msg.chain.segments[msg.cursor as usize];
        assert_eq!(seg.cc as usize, self.id, "chain delivered to the wrong CC thread");
        let mut waiting = 0;
        for &(rid, mode) in msg.chain.segment(msg.cursor as usize) {
            let pool = &mut self.pool;
            let reqs = self.table.entry(rid).or_insert_with(|| pool.pop().unwrap_or_default());
            // granted iff no earlier request conflicts (FIFO, no barging)
            let granted = reqs.iter().all(|r| !r.mode.conflicts(mode));
            reqs.push(Req { owner: msg.owner, mode, granted });
            waiting += u32::from(!granted);
        }
        let owner = msg.owner;
        if waiting == 0 {
            self.advance(&msg);
        }
        let prev = self.active.insert(owner, Active { msg, waiting });
        debug_assert!(prev.is_none(), "owner {owner:#x} acquired twice");
    }

    fn advance(&mut self, msg: &ChainMsg) {
        let next = msg.cursor as usize + 1;
        if next < msg.chain.segments.len() {
            let to = msg.chain.segments[next].cc as usize;
            let out = self.to_peers[to].as_mut().expect("chains only move to higher CC threads");
            out.send(ToCc::Acquire(ChainMsg { cursor: next as u16, hops: msg.hops + 1, ..msg.clone() }));
            self.stats.forwards += 1;
        } else {
            self.to_exec[msg.exec as usize].send(ToExec::Granted {
                slot: msg.slot,
                owner: msg.owner,
                hops: msg.hops + 1,
            });
            self.stats.replies += 1;
        }
    }

    /// Drops the owner's local requests and promotes waiters. Unknown
    /// owners are ignored.
    pub fn process_release(&mut self, owner: u64, exec: u16) {
        self.stats.releases += 1;
        self.to_exec[exec as usize].send(ToExec::ReleaseAck { owner });
        self.stats.acks += 1;
        let Some(active) = self.active.remove(&owner) else {
            self.stats.unknown_releases += 1;
            return;
        };
        self.promoted.clear();
        for &(rid, _) in active.msg.chain.segment(active.msg.cursor as usize) {
            let Some(reqs) = self.table.get_mut(&rid) else { continue };
            if let Some(pos) = reqs.iter().position(|r| r.owner == owner) {
                reqs.remove(pos);
            }
            let (mut any, mut exclusive) = (false, false);
            for r in reqs.iter_mut() {
                if !r.granted {
                    if exclusive || (any && r.mode == LockMode::Exclusive) {
                        break;
                    }
                    r.granted = true;
                    self.promoted.push(r.owner);
                }
                any = true;
                exclusive |= r.mode == LockMode::Exclusive;
            }
            if reqs.is_empty() {
                let v = self.table.remove(&rid).unwrap();
                self.pool.push(v);
            }
        }
        for i in 0..self.promoted.len() {
            let o = self.promoted[i];
            let a = self.active.get_mut(&o).expect("promoted request has an active chain");
            a.waiting -= 1;
            if a.waiting == 0 {
                let msg = a.msg.clone();
                self.advance(&msg);
            }
        }
    }

    /// Checks table invariants: grants on a record are compatible and form
    /// a FIFO prefix, and waiting counts agree with the table.
    pub fn audit(&self) -> Result<(), String> {
        let mut waits: FxHashMap<u64, u32> = FxHashMap::default();
        for (rid, reqs) in &self.table {
            let granted: Vec<&Req> = reqs.iter().filter(|r| r.granted).collect();
            if granted.len() > 1 && granted.iter().any(|r| r.mode == LockMode::Exclusive) {
                return Err(format!("cc{}: {rid} has an exclusive grant shared", self.id));
            }
            if let Some(first) = reqs.iter().position(|r| !r.granted) {
                if reqs[first..].iter().any(|r| r.granted) {
                    return Err(format!("cc{}: {rid} grant overtook a waiter", self.id));
                }
            }
            for r in reqs.iter().filter(|r| !r.granted) {
                *waits.entry(r.owner).or_default() += 1;
            }
        }
        for (owner, a) in &self.active {
            if waits.get(owner).copied().unwrap_or(0) != a.waiting {
                return Err(format!("cc{}: owner {owner:#x} waiting count drifted", self.id));
            }
        }
        Ok(())
    }
}
