//! Partitioned-functionality engine.
//!
//! Concurrency-control (CC) threads each own a disjoint partition of the
//! lock table and never share it. Execution threads run transaction logic
//! only, keep several transactions in flight, and talk to CC threads over
//! single-producer/single-consumer queues.
//!
//! A transaction's lock set is sorted by (owning CC thread, record) and
//! sent as one chain message to the lowest CC thread involved. Each CC
//! thread inserts its own records, waits until all of them are granted,
//! then forwards the chain to the next CC thread; the last one replies to
//! the execution thread. Acquisition therefore costs one message per CC
//! thread involved plus the reply, and chains cross CC threads only in
//! ascending order, so no deadlock can form. Releases go directly from the
//! execution thread to every CC thread involved and are acknowledged.

mod cc;
mod exec;
mod queue;
mod sim;

pub use cc::{CcStats, CcWorker};
pub use exec::{ExecStats, ExecWorker};
pub use queue::{channel, Inbox, Outbox, QUEUE_CAPACITY};
pub use sim::Sim;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crossbeam_utils::Backoff;

use crate::engine::{EngineConfig, FeedCursor, Launch, WorkerHandle};
use crate::metrics::{Phase, PhaseClock, WorkerRole};
use crate::storage::{PartitionMap, RecordId};
use crate::txn::{AccessEstimate, LockMode};

/// CC thread owning `id`.
#[inline]
pub fn partition_of(map: &PartitionMap, id: RecordId) -> usize {
    map.partition_of(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub cc: u16,
    pub start: u32,
    pub end: u32,
}

/// A complete lock set ordered by (CC thread, record), with one segment per
/// CC thread involved, in visiting order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockChain {
    pub entries: Vec<(RecordId, LockMode)>,
    pub segments: Vec<Segment>,
}

impl LockChain {
    pub fn segment(&self, i: usize) -> &[(RecordId, LockMode)] {
        let s = self.segments[i];
        &self.entries[s.start as usize..s.end as usize]
    }

    /// CC threads visited, in order.
    pub fn visit_order(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.cc as usize).collect()
    }

    /// Acquisition messages this chain costs: one per CC thread plus the
    /// final reply.
    pub fn predicted_messages(&self) -> usize {
        self.segments.len() + 1
    }
}

/// Orders `estimate` into a chain and predicts its message count.
pub fn build_request_chain(estimate: &AccessEstimate, map: &PartitionMap) -> (LockChain, usize) {
    let mut keyed: Vec<(usize, RecordId, LockMode)> =
        estimate.entries().iter().map(|&(id, m)| (partition_of(map, id), id, m)).collect();
    keyed.sort_unstable();
    keyed.dedup_by(|later, earlier| {
        if later.1 == earlier.1 {
            earlier.2 = earlier.2.max(later.2);
            true
        } else {
            false
        }
    });
    let mut segments: Vec<Segment> = Vec::new();
    for (i, &(cc, _, _)) in keyed.iter().enumerate() {
        match segments.last_mut() {
            Some(s) if s.cc as usize == cc => s.end = i as u32 + 1,
            _ => segments.push(Segment { cc: cc as u16, start: i as u32, end: i as u32 + 1 }),
        }
    }
    let chain = LockChain { entries: keyed.into_iter().map(|(_, id, m)| (id, m)).collect(), segments };
    let predicted = chain.predicted_messages();
    (chain, predicted)
}

/// Acquisition chain in flight. `owner` identifies one attempt of one
/// transaction; a restarted transaction gets a fresh owner.
#[derive(Debug, Clone)]
pub struct ChainMsg {
    pub owner: u64,
    pub exec: u16,
    pub slot: u16,
    pub chain: Arc<LockChain>,
    /// Index of the segment addressed to the receiving CC thread.
    pub cursor: u16,
    /// Messages this chain has used so far, including the one carrying it.
    pub hops: u16,
}

#[derive(Debug, Clone)]
pub enum ToCc {
    Acquire(ChainMsg),
    Release { owner: u64, exec: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToExec {
    Granted { slot: u16, owner: u64, hops: u16 },
    ReleaseAck { owner: u64 },
}

/// The queue mesh: execution→CC, CC→CC (ascending only) and CC→execution.
pub(crate) struct Mesh {
    pub cc_in_exec: Vec<Vec<Inbox<ToCc>>>,
    pub cc_in_peer: Vec<Vec<Inbox<ToCc>>>,
    pub cc_out_peer: Vec<Vec<Option<Outbox<ToCc>>>>,
    pub cc_out_exec: Vec<Vec<Outbox<ToExec>>>,
    pub exec_out: Vec<Vec<Outbox<ToCc>>>,
    pub exec_in: Vec<Vec<Inbox<ToExec>>>,
}

impl Mesh {
    pub fn new(ncc: usize, nexec: usize, capacity: usize) -> Self {
        let mut cc_in_exec: Vec<Vec<Inbox<ToCc>>> = (0..ncc).map(|_| Vec::new()).collect();
        let mut exec_out: Vec<Vec<Outbox<ToCc>>> = (0..nexec).map(|_| Vec::new()).collect();
        for outs in exec_out.iter_mut() {
            for ins in cc_in_exec.iter_mut() {
                let (tx, rx) = channel(capacity);
                outs.push(tx);
                ins.push(rx);
            }
        }
        let mut cc_out_exec: Vec<Vec<Outbox<ToExec>>> = (0..ncc).map(|_| Vec::new()).collect();
        let mut exec_in: Vec<Vec<Inbox<ToExec>>> = (0..nexec).map(|_| Vec::new()).collect();
        for outs in cc_out_exec.iter_mut() {
            for ins in exec_in.iter_mut() {
                let (tx, rx) = channel(capacity);
                outs.push(tx);
                ins.push(rx);
            }
        }
        let mut cc_out_peer: Vec<Vec<Option<Outbox<ToCc>>>> =
            (0..ncc).map(|_| (0..ncc).map(|_| None).collect()).collect();
        let mut cc_in_peer: Vec<Vec<Inbox<ToCc>>> = (0..ncc).map(|_| Vec::new()).collect();
        for c in 0..ncc {
            for d in c + 1..ncc {
                let (tx, rx) = channel(capacity);
                cc_out_peer[c][d] = Some(tx);
                cc_in_peer[d].push(rx);
            }
        }
        Mesh { cc_in_exec, cc_in_peer, cc_out_peer, cc_out_exec, exec_out, exec_in }
    }
}

/// Launches `cfg.cc_threads` CC threads and `cfg.exec_threads` execution
/// threads. CC threads exit once every execution thread has finished and
/// their inputs are drained.
pub fn spawn(cfg: &EngineConfig, launch: &mut Launch) -> Vec<WorkerHandle> {
    let (ncc, nexec) = (cfg.cc_threads, cfg.exec_threads);
    let mut mesh = Mesh::new(ncc, nexec, QUEUE_CAPACITY);
    let live = Arc::new(AtomicUsize::new(nexec));
    let mut handles = Vec::with_capacity(ncc + nexec);

    let mut ccs: Vec<CcWorker> = Vec::new();
    for c in (0..ncc).rev() {
        ccs.push(CcWorker::new(
            c,
            mesh.cc_in_exec.pop().unwrap(),
            mesh.cc_in_peer.pop().unwrap(),
            mesh.cc_out_peer.pop().unwrap(),
            mesh.cc_out_exec.pop().unwrap(),
        ));
    }
    ccs.reverse();
    for mut cc in ccs {
        let live = Arc::clone(&live);
        let id = cc.id();
        handles.push(launch.spawn(format!("orthrus-cc-{id}"), WorkerRole::ConcurrencyControl, move |counters| {
            let mut clock = PhaseClock::new(counters, Phase::Idle);
            let backoff = Backoff::new();
            loop {
                if cc.step(&mut clock) {
                    backoff.reset();
                } else {
                    if live.load(Ordering::Acquire) == 0 && cc.drained() {
                        break;
                    }
                    backoff.snooze();
                }
            }
            Vec::new()
        }));
    }

    let mut execs: Vec<ExecWorker> = Vec::new();
    for e in (0..nexec).rev() {
        let cursor = FeedCursor::new(launch.feed.clone(), Arc::clone(&launch.control), e);
        execs.push(ExecWorker::new(
            e,
            cfg.inflight,
            cfg.partition,
            Arc::clone(&launch.db),
            cursor,
            launch.recorder.as_ref().map(|r| r.log()),
            mesh.exec_out.pop().unwrap(),
            mesh.exec_in.pop().unwrap(),
        ));
    }
    execs.reverse();
    for mut ex in execs {
        let live = Arc::clone(&live);
        let id = ex.id();
        handles.push(launch.spawn(format!("orthrus-exec-{id}"), WorkerRole::Execution, move |counters| {
            let mut clock = PhaseClock::new(counters, Phase::Idle);
            let backoff = Backoff::new();
            while !ex.finished() {
                if ex.step(counters, &mut clock) {
                    backoff.reset();
                } else {
                    backoff.snooze();
                }
            }
            drop(clock);
            live.fetch_sub(1, Ordering::AcqRel);
            ex.into_events()
        }));
    }
    handles
}

#[cfg(test)]
mod tests;
