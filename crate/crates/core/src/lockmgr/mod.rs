//! Shared-memory two-phase locking.
//!
//! The lock table is a hash table of FIFO request lists protected by
//! per-bucket spin latches. Four deadlock policies share it: wait-for graph
//! detection, wait-die, dreadlocks, and deadlock-free ordered acquisition.
//!
//! Every in-flight transaction owns a *slot*. Slots carry the state other
//! threads need to see: the current transaction id, the wait flag a
//! releaser flips on grant, the dreadlocks digest, and the slot's partition
//! of the wait-for graph (one edge per blocker slot).
//!
//! The API is non-blocking so that the deterministic tests can interleave
//! transactions by hand: [`LockManager::acquire`] returns `MustWait`, and the
//! caller then calls [`LockManager::poll`] until the request resolves.

mod engine;
mod latch;

pub use engine::spawn_two_phase;
pub use latch::{SpinGuard, SpinLatch};

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;

use crate::error::LockError;
use crate::storage::{splitmix64, RecordId};
use crate::txn::{AccessEstimate, LockMode, Timestamp, TxnId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeadlockPolicy {
    WaitFor,
    WaitDie,
    Dreadlocks,
    DeadlockFree,
}

impl DeadlockPolicy {
    pub const ALL: [DeadlockPolicy; 4] =
        [DeadlockPolicy::WaitFor, DeadlockPolicy::WaitDie, DeadlockPolicy::Dreadlocks, DeadlockPolicy::DeadlockFree];

    pub fn name(self) -> &'static str {
        match self {
            DeadlockPolicy::WaitFor => "2pl-waitfor",
            DeadlockPolicy::WaitDie => "2pl-waitdie",
            DeadlockPolicy::Dreadlocks => "2pl-dreadlocks",
            DeadlockPolicy::DeadlockFree => "2pl-deadlockfree",
        }
    }
}

impl FromStr for DeadlockPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DeadlockPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown 2PL policy {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquireOutcome {
    Granted,
    MustWait,
    AbortDeadlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitStatus {
    Granted,
    Waiting,
    Deadlock,
}

/// Acquisition sequence for deadlock-free locking: record order, one entry
/// per record at its strongest mode.
pub fn ordered_lockset(estimate: &AccessEstimate) -> Vec<(RecordId, LockMode)> {
    let mut out: Vec<(RecordId, LockMode)> = estimate.entries().to_vec();
    out.sort_unstable();
    out.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 = earlier.1.max(later.1);
            true
        } else {
            false
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitDie {
    Wait,
    Die,
}

/// An older requester (smaller timestamp) may wait; a younger one dies.
pub fn waitdie_decide(requester: Timestamp, holder: Timestamp) -> Result<WaitDie, LockError> {
    match requester.cmp(&holder) {
        std::cmp::Ordering::Less => Ok(WaitDie::Wait),
        std::cmp::Ordering::Greater => Ok(WaitDie::Die),
        std::cmp::Ordering::Equal => Err(LockError::DuplicateTimestamp),
    }
}

/// Wait only if the requester is older than every conflicting request.
pub fn waitdie_decide_all(
    requester: Timestamp,
    conflicting: impl IntoIterator<Item = Timestamp>,
) -> Result<WaitDie, LockError> {
    let mut decision = WaitDie::Wait;
    for holder in conflicting {
        if waitdie_decide(requester, holder)? == WaitDie::Die {
            decision = WaitDie::Die;
        }
    }
    Ok(decision)
}

/// Bitmap over transaction slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digest {
    words: Vec<u64>,
}

impl Digest {
    pub fn empty(slots: usize) -> Self {
        Digest { words: vec![0; slots.div_ceil(64).max(1)] }
    }

    pub fn singleton(slots: usize, slot: usize) -> Self {
        let mut d = Self::empty(slots);
        d.insert(slot);
        d
    }

    pub fn from_slots(slots: usize, members: &[usize]) -> Self {
        let mut d = Self::empty(slots);
        for &m in members {
            d.insert(m);
        }
        d
    }

    #[inline]
    pub fn insert(&mut self, slot: usize) {
        self.words[slot / 64] |= 1 << (slot % 64);
    }

    #[inline]
    pub fn contains(&self, slot: usize) -> bool {
        self.words[slot / 64] & (1 << (slot % 64)) != 0
    }

    pub fn union_with(&mut self, other: &Digest) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.words.len() * 64).filter(|&s| self.contains(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DreadlockProbe {
    Continue(Digest),
    Deadlock,
}

/// One dreadlocks step: `me` (with digest `own`) waits on `blocker`. The
/// result is `own ∪ blocker_digest ∪ {blocker}`, or `Deadlock` when `me`
/// already appears in the blocker's digest.
pub fn dreadlocks_probe(me: usize, own: &Digest, blocker: usize, blocker_digest: &Digest) -> DreadlockProbe {
    if blocker_digest.contains(me) {
        return DreadlockProbe::Deadlock;
    }
    let mut next = own.clone();
    next.union_with(blocker_digest);
    next.insert(blocker);
    DreadlockProbe::Continue(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitForOutcome {
    NoCycle,
    Cycle(TxnId),
}

#[derive(Debug, Clone, Copy)]
struct Request {
    key: RecordId,
    txn: u64,
    slot: u32,
    mode: LockMode,
    granted: bool,
    ts: Timestamp,
}

const RUNNING: u8 = 0;
const WAITING: u8 = 1;
const GRANTED: u8 = 2;

struct Slot {
    txn: AtomicU64,
    wait: AtomicU8,
    digest: Box<[AtomicU64]>,
    /// This slot's partition of the wait-for graph: entry `j` holds the id
    /// of the transaction in slot `j` that this slot waits on, or 0.
    waits_for: Box<[AtomicU64]>,
}

#[derive(Debug, Clone, Copy)]
struct Blocker {
    slot: usize,
    txn: u64,
}

/// Per-transaction lock bookkeeping, owned by the thread running it.
/// Buffers are sized up front and reused so that acquire/release never
/// allocate once warm.
pub struct TxnLocks {
    slot: usize,
    txn: u64,
    ts: Timestamp,
    held: Vec<(RecordId, LockMode)>,
    waiting: Option<(RecordId, LockMode)>,
    blockers: Vec<Blocker>,
    digest: Digest,
    visited: Digest,
    stack: Vec<usize>,
    last_sweep: Option<Instant>,
}

impl TxnLocks {
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn txn(&self) -> TxnId {
        TxnId(self.txn)
    }

    pub fn held(&self) -> &[(RecordId, LockMode)] {
        &self.held
    }

    pub fn is_waiting(&self) -> bool {
        self.waiting.is_some()
    }

    pub fn held_mode(&self, key: RecordId) -> Option<LockMode> {
        self.held.iter().find(|(k, _)| *k == key).map(|&(_, m)| m)
    }
}

pub struct LockManager {
    policy: DeadlockPolicy,
    buckets: Box<[CachePadded<SpinLatch<Vec<Request>>>]>,
    mask: usize,
    slots: Box<[CachePadded<Slot>]>,
    sweep_interval: Duration,
}

impl LockManager {
    /// `slots` bounds the number of concurrently active transactions;
    /// `expected_locks` sizes the bucket array.
    pub fn new(policy: DeadlockPolicy, slots: usize, expected_locks: usize) -> Self {
        let nbuckets = (expected_locks.max(16) * 4).next_power_of_two();
        let buckets = (0..nbuckets).map(|_| CachePadded::new(SpinLatch::new(Vec::with_capacity(4)))).collect();
        let words = slots.div_ceil(64).max(1);
        let slots = (0..slots)
            .map(|_| {
                CachePadded::new(Slot {
                    txn: AtomicU64::new(0),
                    wait: AtomicU8::new(RUNNING),
                    digest: (0..words).map(|_| AtomicU64::new(0)).collect(),
                    waits_for: (0..slots).map(|_| AtomicU64::new(0)).collect(),
                })
            })
            .collect();
        LockManager { policy, buckets, mask: nbuckets - 1, slots, sweep_interval: Duration::from_millis(1) }
    }

    /// Interval of the periodic wait-for cycle sweep while blocked.
    pub fn with_sweep_interval(mut self, interval: Duration) -> Self {
        self.sweep_interval = interval;
        self
    }

    pub fn policy(&self) -> DeadlockPolicy {
        self.policy
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn txn_locks(&self, slot: usize) -> TxnLocks {
        assert!(slot < self.slots.len());
        let n = self.slots.len();
        TxnLocks {
            slot,
            txn: 0,
            ts: Timestamp::new(0, 0),
            held: Vec::with_capacity(64),
            waiting: None,
            blockers: Vec::with_capacity(n),
            digest: Digest::empty(n),
            visited: Digest::empty(n),
            stack: Vec::with_capacity(n),
            last_sweep: None,
        }
    }

    #[inline]
    fn bucket(&self, key: RecordId) -> &SpinLatch<Vec<Request>> {
        let h = splitmix64(key.key ^ ((key.table.0 as u64) << 56));
        &self.buckets[h as usize & self.mask]
    }

    /// Binds `locks` to a new transaction attempt. `txn` must be nonzero.
    pub fn begin(&self, locks: &mut TxnLocks, txn: TxnId, ts: Timestamp) {
        debug_assert!(locks.held.is_empty() && locks.waiting.is_none());
        debug_assert_ne!(txn.0, 0);
        locks.txn = txn.0;
        locks.ts = ts;
        let slot = &self.slots[locks.slot];
        slot.wait.store(RUNNING, Ordering::SeqCst);
        self.publish_digest_self(locks);
        slot.txn.store(txn.0, Ordering::SeqCst);
    }

    fn publish_digest_self(&self, locks: &mut TxnLocks) {
        locks.digest.clear();
        locks.digest.insert(locks.slot);
        self.publish_digest(locks);
    }

    fn publish_digest(&self, locks: &TxnLocks) {
        let slot = &self.slots[locks.slot];
        for (w, v) in slot.digest.iter().zip(&locks.digest.words) {
            w.store(*v, Ordering::SeqCst);
        }
    }

    fn clear_edges(&self, locks: &TxnLocks) {
        let slot = &self.slots[locks.slot];
        for b in &locks.blockers {
            slot.waits_for[b.slot].store(0, Ordering::SeqCst);
        }
    }

    pub fn acquire(
        &self,
        locks: &mut TxnLocks,
        key: RecordId,
        mode: LockMode,
    ) -> Result<AcquireOutcome, LockError> {
        debug_assert!(locks.waiting.is_none(), "one outstanding request per transaction");
        if let Some(held) = locks.held_mode(key) {
            return if held.covers(mode) { Ok(AcquireOutcome::Granted) } else { Err(LockError::Upgrade(key)) };
        }
        let mut reqs = self.bucket(key).lock();
        locks.blockers.clear();
        let mut conflict = false;
        let mut queued = false;
        let mut die = false;
        for r in reqs.iter().filter(|r| r.key == key) {
            queued |= !r.granted;
            if r.mode.conflicts(mode) {
                conflict = true;
                locks.blockers.push(Blocker { slot: r.slot as usize, txn: r.txn });
                if self.policy == DeadlockPolicy::WaitDie && waitdie_decide(locks.ts, r.ts)? == WaitDie::Die {
                    die = true;
                }
            }
        }
        let request = Request { key, txn: locks.txn, slot: locks.slot as u32, mode, granted: false, ts: locks.ts };
        if !conflict && !queued {
            reqs.push(Request { granted: true, ..request });
            drop(reqs);
            locks.held.push((key, mode));
            return Ok(AcquireOutcome::Granted);
        }
        if die {
            locks.blockers.clear();
            return Ok(AcquireOutcome::AbortDeadlock);
        }
        self.slots[locks.slot].wait.store(WAITING, Ordering::SeqCst);
        reqs.push(request);
        drop(reqs);
        locks.waiting = Some((key, mode));

        let deadlock = match self.policy {
            DeadlockPolicy::WaitFor => {
                let slot = &self.slots[locks.slot];
                for b in &locks.blockers {
                    slot.waits_for[b.slot].store(b.txn, Ordering::SeqCst);
                }
                locks.last_sweep = Some(Instant::now());
                self.waitfor_cycle(locks)
            }
            DeadlockPolicy::Dreadlocks => self.dreadlocks_recompute(locks),
            DeadlockPolicy::WaitDie | DeadlockPolicy::DeadlockFree => false,
        };
        if deadlock {
            return Ok(if self.cancel_wait(locks) { AcquireOutcome::Granted } else { AcquireOutcome::AbortDeadlock });
        }
        Ok(AcquireOutcome::MustWait)
    }

    /// Checks on an outstanding request, running the policy's detection step
    /// while it is still blocked. On `Deadlock` the request has been removed.
    pub fn poll(&self, locks: &mut TxnLocks) -> WaitStatus {
        let Some(_) = locks.waiting else {
            return WaitStatus::Granted;
        };
        if self.slots[locks.slot].wait.load(Ordering::Acquire) == GRANTED {
            self.finish_grant(locks);
            return WaitStatus::Granted;
        }
        let deadlock = match self.policy {
            DeadlockPolicy::WaitFor => {
                let now = Instant::now();
                let due = locks.last_sweep.is_none_or(|t| now.duration_since(t) >= self.sweep_interval);
                if due {
                    locks.last_sweep = Some(now);
                    self.waitfor_cycle(locks)
                } else {
                    false
                }
            }
            DeadlockPolicy::Dreadlocks => self.dreadlocks_recompute(locks),
            _ => false,
        };
        if deadlock {
            if self.cancel_wait(locks) {
                return WaitStatus::Granted;
            }
            return WaitStatus::Deadlock;
        }
        WaitStatus::Waiting
    }

    fn finish_grant(&self, locks: &mut TxnLocks) {
        let (key, mode) = locks.waiting.take().expect("waiting request");
        locks.held.push((key, mode));
        self.clear_edges(locks);
        locks.blockers.clear();
        self.slots[locks.slot].wait.store(RUNNING, Ordering::SeqCst);
        if self.policy == DeadlockPolicy::Dreadlocks {
            self.publish_digest_self(locks);
        }
    }

    /// Withdraws the outstanding request. Returns true if it had already
    /// been granted, in which case the lock is now held.
    fn cancel_wait(&self, locks: &mut TxnLocks) -> bool {
        let (key, _) = locks.waiting.expect("waiting request");
        let mut reqs = self.bucket(key).lock();
        let pos = reqs
            .iter()
            .position(|r| r.key == key && r.txn == locks.txn)
            .expect("own request present");
        if reqs[pos].granted {
            drop(reqs);
            self.finish_grant(locks);
            return true;
        }
        reqs.remove(pos);
        self.promote(&mut reqs, key);
        drop(reqs);
        locks.waiting = None;
        self.clear_edges(locks);
        locks.blockers.clear();
        self.slots[locks.slot].wait.store(RUNNING, Ordering::SeqCst);
        if self.policy == DeadlockPolicy::Dreadlocks {
            self.publish_digest_self(locks);
        }
        false
    }

    /// Releases every lock held (and withdraws any outstanding request),
    /// promoting the longest compatible FIFO prefix of waiters on each key.
    pub fn release_all(&self, locks: &mut TxnLocks) {
        if locks.waiting.is_some() {
            self.cancel_wait(locks);
        }
        for i in 0..locks.held.len() {
            let key = locks.held[i].0;
            let mut reqs = self.bucket(key).lock();
            if let Some(pos) = reqs.iter().position(|r| r.key == key && r.txn == locks.txn) {
                reqs.remove(pos);
                self.promote(&mut reqs, key);
            }
        }
        locks.held.clear();
        // the slot is recycled only after every release is done
        self.slots[locks.slot].txn.store(0, Ordering::SeqCst);
    }

    fn promote(&self, reqs: &mut [Request], key: RecordId) {
        let mut any = false;
        let mut exclusive = false;
        for r in reqs.iter_mut().filter(|r| r.key == key) {
            if !r.granted {
                if exclusive || (any && r.mode == LockMode::Exclusive) {
                    break;
                }
                r.granted = true;
                self.slots[r.slot as usize].wait.store(GRANTED, Ordering::Release);
            }
            any = true;
            exclusive |= r.mode == LockMode::Exclusive;
        }
    }

    fn waitfor_cycle(&self, locks: &mut TxnLocks) -> bool {
        let me = locks.slot;
        locks.visited.clear();
        locks.stack.clear();
        locks.stack.push(me);
        locks.visited.insert(me);
        while let Some(s) = locks.stack.pop() {
            for (j, edge) in self.slots[s].waits_for.iter().enumerate() {
                let t = edge.load(Ordering::SeqCst);
                if t == 0 {
                    continue;
                }
                if j == me {
                    if t == locks.txn {
                        return true;
                    }
                    continue;
                }
                let sj = &self.slots[j];
                if sj.txn.load(Ordering::SeqCst) != t || sj.wait.load(Ordering::SeqCst) != WAITING {
                    continue;
                }
                if !locks.visited.contains(j) {
                    locks.visited.insert(j);
                    locks.stack.push(j);
                }
            }
        }
        false
    }

    /// Adds `waiter → holder` edges to the waiter's partition and checks the
    /// union of all partitions for a cycle through the waiter. The waiter is
    /// the victim; on a cycle its edges are withdrawn.
    pub fn waitfor_add_and_check(&self, waiter: &mut TxnLocks, holders: &[(usize, TxnId)]) -> WaitForOutcome {
        let slot = &self.slots[waiter.slot];
        slot.wait.store(WAITING, Ordering::SeqCst);
        for &(s, t) in holders {
            slot.waits_for[s].store(t.0, Ordering::SeqCst);
            waiter.blockers.push(Blocker { slot: s, txn: t.0 });
        }
        if self.waitfor_cycle(waiter) {
            self.clear_edges(waiter);
            waiter.blockers.clear();
            slot.wait.store(RUNNING, Ordering::SeqCst);
            WaitForOutcome::Cycle(TxnId(waiter.txn))
        } else {
            WaitForOutcome::NoCycle
        }
    }

    fn dreadlocks_recompute(&self, locks: &mut TxnLocks) -> bool {
        let me = locks.slot;
        let slots = &self.slots;
        locks.blockers.retain(|b| slots[b.slot].txn.load(Ordering::SeqCst) == b.txn);
        locks.visited.clear();
        locks.visited.insert(me);
        for b in &locks.blockers {
            let bs = &self.slots[b.slot];
            locks.visited.insert(b.slot);
            if bs.wait.load(Ordering::SeqCst) != WAITING {
                continue;
            }
            for (i, w) in bs.digest.iter().enumerate() {
                let w = w.load(Ordering::SeqCst);
                if i == me / 64 && w & (1 << (me % 64)) != 0 {
                    return true;
                }
                locks.visited.words[i] |= w;
            }
        }
        std::mem::swap(&mut locks.digest, &mut locks.visited);
        self.publish_digest(locks);
        false
    }

    /// Current published digest of a slot.
    pub fn digest_of(&self, slot: usize) -> Digest {
        Digest { words: self.slots[slot].digest.iter().map(|w| w.load(Ordering::SeqCst)).collect() }
    }

    /// Checks lock-table invariants: granted requests on a key are mutually
    /// compatible, and granted requests form a FIFO prefix.
    pub fn audit(&self) -> Result<(), String> {
        for b in self.buckets.iter() {
            let reqs = b.lock();
            let mut keys: Vec<RecordId> = reqs.iter().map(|r| r.key).collect();
            keys.sort_unstable();
            keys.dedup();
            for key in keys {
                let chain: Vec<&Request> = reqs.iter().filter(|r| r.key == key).collect();
                let granted: Vec<&&Request> = chain.iter().filter(|r| r.granted).collect();
                let x = granted.iter().filter(|r| r.mode == LockMode::Exclusive).count();
                if x > 0 && granted.len() > 1 {
                    return Err(format!("{key}: exclusive grant shared with {} others", granted.len() - 1));
                }
                if let Some(first_wait) = chain.iter().position(|r| !r.granted) {
                    if chain[first_wait..].iter().any(|r| r.granted) {
                        return Err(format!("{key}: grant overtook a waiter"));
                    }
                    let w = chain[first_wait];
                    if !chain[..first_wait].iter().any(|r| r.mode.conflicts(w.mode)) {
                        return Err(format!("{key}: head waiter is grantable"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Requests currently queued on `key` as (txn, mode, granted), in order.
    pub fn chain(&self, key: RecordId) -> Vec<(TxnId, LockMode, bool)> {
        self.bucket(key)
            .lock()
            .iter()
            .filter(|r| r.key == key)
            .map(|r| (TxnId(r.txn), r.mode, r.granted))
            .collect()
    }
}
