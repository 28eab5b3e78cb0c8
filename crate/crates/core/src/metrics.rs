//! Per-thread counters and CPU-time buckets.
//!
//! Each worker owns one [`WorkerCounters`] and is its only writer. The
//! driver reads them at window boundaries; nothing on the measurement path
//! is shared between workers.

use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;

use crate::txn::{AbortCause, TxnClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Transaction logic, reconnaissance and rollback.
    Execute,
    /// Blocked on a lock grant.
    LockWait,
    /// Lock table operations.
    LockManager,
    /// Queue sends and receives.
    Messaging,
    /// No transaction to run.
    Idle,
}

impl Phase {
    pub const COUNT: usize = 5;
    pub const ALL: [Phase; 5] = [Phase::Execute, Phase::LockWait, Phase::LockManager, Phase::Messaging, Phase::Idle];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Execute => "execute",
            Phase::LockWait => "lock_wait",
            Phase::LockManager => "lock_manager",
            Phase::Messaging => "messaging",
            Phase::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerRole {
    /// Runs transaction logic (2PL workers, pstore workers, ORTHRUS exec).
    Execution,
    /// ORTHRUS concurrency-control thread.
    ConcurrencyControl,
}

#[derive(Debug)]
pub struct WorkerCounters {
    pub role: WorkerRole,
    committed: AtomicU64,
    committed_by_class: [AtomicU64; TxnClass::COUNT],
    started_by_class: [AtomicU64; TxnClass::COUNT],
    recon_by_class: [AtomicU64; TxnClass::COUNT],
    aborts: [AtomicU64; 3],
    acquire_messages: AtomicU64,
    release_messages: AtomicU64,
    time_ns: [AtomicU64; Phase::COUNT],
}

fn bump(c: &AtomicU64, n: u64) {
    // single writer: a load/store pair avoids a locked RMW
    c.store(c.load(Ordering::Relaxed) + n, Ordering::Relaxed);
}

impl WorkerCounters {
    pub fn new(role: WorkerRole) -> CachePadded<Self> {
        CachePadded::new(WorkerCounters {
            role,
            committed: AtomicU64::new(0),
            committed_by_class: Default::default(),
            started_by_class: Default::default(),
            recon_by_class: Default::default(),
            aborts: Default::default(),
            acquire_messages: AtomicU64::new(0),
            release_messages: AtomicU64::new(0),
            time_ns: Default::default(),
        })
    }

    pub fn commit(&self, class: TxnClass) {
        bump(&self.committed, 1);
        bump(&self.committed_by_class[class.index()], 1);
    }

    /// A new logical transaction was admitted (restarts are not counted).
    pub fn start(&self, class: TxnClass) {
        bump(&self.started_by_class[class.index()], 1);
    }

    pub fn reconnaissance(&self, class: TxnClass) {
        bump(&self.recon_by_class[class.index()], 1);
    }

    pub fn abort(&self, cause: AbortCause) {
        bump(&self.aborts[cause.index()], 1);
    }

    pub fn acquire_messages(&self, n: u64) {
        bump(&self.acquire_messages, n);
    }

    pub fn release_messages(&self, n: u64) {
        bump(&self.release_messages, n);
    }

    fn add_time(&self, phase: Phase, ns: u64) {
        bump(&self.time_ns[phase as usize], ns);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        let load = |a: &[AtomicU64]| -> Vec<u64> { a.iter().map(|c| c.load(Ordering::Relaxed)).collect() };
        CounterSnapshot {
            committed: self.committed.load(Ordering::Relaxed),
            committed_by_class: load(&self.committed_by_class).try_into().unwrap(),
            started_by_class: load(&self.started_by_class).try_into().unwrap(),
            recon_by_class: load(&self.recon_by_class).try_into().unwrap(),
            aborts: load(&self.aborts).try_into().unwrap(),
            acquire_messages: self.acquire_messages.load(Ordering::Relaxed),
            release_messages: self.release_messages.load(Ordering::Relaxed),
            time_ns: load(&self.time_ns).try_into().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub committed: u64,
    pub committed_by_class: [u64; TxnClass::COUNT],
    pub started_by_class: [u64; TxnClass::COUNT],
    pub recon_by_class: [u64; TxnClass::COUNT],
    pub aborts: [u64; 3],
    pub acquire_messages: u64,
    pub release_messages: u64,
    pub time_ns: [u64; Phase::COUNT],
}

impl Sub for CounterSnapshot {
    type Output = CounterSnapshot;
    fn sub(self, rhs: Self) -> Self {
        fn d<const N: usize>(a: [u64; N], b: [u64; N]) -> [u64; N] {
            std::array::from_fn(|i| a[i].saturating_sub(b[i]))
        }
        CounterSnapshot {
            committed: self.committed - rhs.committed,
            committed_by_class: d(self.committed_by_class, rhs.committed_by_class),
            started_by_class: d(self.started_by_class, rhs.started_by_class),
            recon_by_class: d(self.recon_by_class, rhs.recon_by_class),
            aborts: d(self.aborts, rhs.aborts),
            acquire_messages: self.acquire_messages - rhs.acquire_messages,
            release_messages: self.release_messages - rhs.release_messages,
            time_ns: d(self.time_ns, rhs.time_ns),
        }
    }
}

impl CounterSnapshot {
    pub fn accumulate(&mut self, o: &CounterSnapshot) {
        fn add<const N: usize>(a: &mut [u64; N], b: &[u64; N]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.committed += o.committed;
        add(&mut self.committed_by_class, &o.committed_by_class);
        add(&mut self.started_by_class, &o.started_by_class);
        add(&mut self.recon_by_class, &o.recon_by_class);
        add(&mut self.aborts, &o.aborts);
        self.acquire_messages += o.acquire_messages;
        self.release_messages += o.release_messages;
        add(&mut self.time_ns, &o.time_ns);
    }

    pub fn total_time_ns(&self) -> u64 {
        self.time_ns.iter().sum()
    }
}

/// Attributes wall time to phases by stamping the monotonic clock at every
/// phase boundary. Time is published to the counters on each switch.
pub struct PhaseClock<'a> {
    counters: &'a WorkerCounters,
    phase: Phase,
    since: Instant,
}

impl<'a> PhaseClock<'a> {
    pub fn new(counters: &'a WorkerCounters, phase: Phase) -> Self {
        PhaseClock { counters, phase, since: Instant::now() }
    }

    /// Closes the current interval and starts one in `phase` (which may be
    /// the same phase).
    #[inline]
    pub fn switch(&mut self, phase: Phase) {
        let now = Instant::now();
        self.counters.add_time(self.phase, now.duration_since(self.since).as_nanos() as u64);
        self.phase = phase;
        self.since = now;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }
}

impl Drop for PhaseClock<'_> {
    fn drop(&mut self) {
        self.switch(self.phase);
    }
}

/// Measured-window result of one run.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub engine: String,
    pub workload: String,
    pub cores: usize,
    pub cc_threads: usize,
    pub exec_threads: usize,
    pub hot_set: u64,
    pub warehouses: u32,
    pub mp_pct: u32,
    pub parts_per_txn: usize,
    pub seed: u64,
    pub duration: Duration,
    /// Totals over the execution threads.
    pub exec: CounterSnapshot,
    /// Totals over ORTHRUS concurrency-control threads (zero elsewhere).
    pub cc: CounterSnapshot,
    /// Per execution thread: accounted time over window length.
    pub coverage: Vec<f64>,
}

impl MetricsReport {
    pub fn committed(&self) -> u64 {
        self.exec.committed
    }

    pub fn committed_per_s(&self) -> f64 {
        let s = self.duration.as_secs_f64();
        if s == 0.0 {
            0.0
        } else {
            self.exec.committed as f64 / s
        }
    }

    pub fn aborts(&self, cause: AbortCause) -> u64 {
        self.exec.aborts[cause.index()]
    }

    /// Acquisition plus release messages.
    pub fn messages(&self) -> u64 {
        self.exec.acquire_messages + self.exec.release_messages
    }

    /// Share of execution-thread time in each phase, in percent.
    pub fn breakdown(&self) -> [f64; Phase::COUNT] {
        let total = self.exec.total_time_ns() as f64;
        std::array::from_fn(|i| if total == 0.0 { 0.0 } else { 100.0 * self.exec.time_ns[i] as f64 / total })
    }

    pub fn pct(&self, phase: Phase) -> f64 {
        self.breakdown()[phase as usize]
    }

    /// Fraction of started transactions of `class` that ran reconnaissance.
    pub fn recon_fraction(&self, class: TxnClass) -> f64 {
        let started = self.exec.started_by_class[class.index()];
        if started == 0 {
            0.0
        } else {
            self.exec.recon_by_class[class.index()] as f64 / started as f64
        }
    }
}
