//! Engine selection, transaction feeds and the run driver shared by all
//! engines.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, ConfigError};
use crate::lockmgr::DeadlockPolicy;
use crate::metrics::{CounterSnapshot, WorkerCounters, WorkerRole};
use crate::storage::{Database, PartitionMap};
use crate::txn::{Procedure, TxnId};
use crate::verify::{Event, History, HistoryRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Orthrus,
    TwoPhase(DeadlockPolicy),
    PStore,
}

impl EngineKind {
    pub const ALL: [EngineKind; 6] = [
        EngineKind::Orthrus,
        EngineKind::TwoPhase(DeadlockPolicy::WaitFor),
        EngineKind::TwoPhase(DeadlockPolicy::WaitDie),
        EngineKind::TwoPhase(DeadlockPolicy::Dreadlocks),
        EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree),
        EngineKind::PStore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Orthrus => "orthrus",
            EngineKind::TwoPhase(p) => p.name(),
            EngineKind::PStore => "pstore",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EngineKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown engine {s}; expected one of orthrus, 2pl-waitfor, 2pl-waitdie, 2pl-dreadlocks, 2pl-deadlockfree, pstore"))
    }
}

/// Transaction generator run inside each worker thread.
pub trait Workload: Send + Sync {
    fn name(&self) -> &'static str;
    /// `worker` is the generating thread's index; partition-aware
    /// generators use it to pick a home partition.
    fn generate(&self, rng: &mut ChaCha8Rng, worker: usize) -> Arc<dyn Procedure>;
}

#[derive(Clone)]
pub enum Feed {
    /// Closed-loop generation from per-worker seeded RNGs.
    Generated { workload: Arc<dyn Workload>, seed: u64 },
    /// A fixed list shared by all workers; transaction `i` gets id `i + 1`.
    Fixed(Arc<[Arc<dyn Procedure>]>),
}

impl Feed {
    pub fn generated(workload: Arc<dyn Workload>, seed: u64) -> Self {
        Feed::Generated { workload, seed }
    }

    pub fn fixed(txns: Vec<Arc<dyn Procedure>>) -> Self {
        Feed::Fixed(txns.into())
    }
}

/// Stop flag and admission limit shared by the workers of one run.
#[derive(Debug)]
pub struct RunControl {
    stop: AtomicBool,
    admitted: CachePadded<AtomicU64>,
    next_fixed: CachePadded<AtomicUsize>,
    limit: Option<u64>,
}

impl RunControl {
    pub fn new(limit: Option<u64>) -> Arc<Self> {
        Arc::new(RunControl {
            stop: AtomicBool::new(false),
            admitted: CachePadded::new(AtomicU64::new(0)),
            next_fixed: CachePadded::new(AtomicUsize::new(0)),
            limit,
        })
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    pub fn admitted(&self) -> u64 {
        self.admitted.load(Ordering::Relaxed)
    }

    fn admit(&self) -> bool {
        if self.stopped() {
            return false;
        }
        match self.limit {
            None => true,
            Some(limit) => self.admitted.fetch_add(1, Ordering::Relaxed) < limit,
        }
    }
}

/// One worker's view of the feed.
pub struct FeedCursor {
    feed: Feed,
    control: Arc<RunControl>,
    worker: usize,
    rng: ChaCha8Rng,
    counter: u64,
}

impl FeedCursor {
    pub fn new(feed: Feed, control: Arc<RunControl>, worker: usize) -> Self {
        let seed = match &feed {
            Feed::Generated { seed, .. } => *seed,
            Feed::Fixed(_) => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(worker as u64 + 1);
        FeedCursor { feed, control, worker, rng, counter: 0 }
    }

    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn next_txn(&mut self) -> Option<(TxnId, Arc<dyn Procedure>)> {
        if !self.control.admit() {
            return None;
        }
        match &self.feed {
            Feed::Generated { workload, .. } => {
                self.counter += 1;
                let id = TxnId(((self.worker as u64 + 1) << 40) | self.counter);
                Some((id, workload.generate(&mut self.rng, self.worker)))
            }
            Feed::Fixed(list) => {
                let i = self.control.next_fixed.fetch_add(1, Ordering::Relaxed);
                list.get(i).map(|p| (TxnId(i as u64 + 1), Arc::clone(p)))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub kind: EngineKind,
    /// Worker threads for 2PL engines; partitions (one worker each) for
    /// pstore.
    pub workers: usize,
    pub cc_threads: usize,
    pub exec_threads: usize,
    /// In-flight transactions per ORTHRUS execution thread.
    pub inflight: usize,
    /// Record-to-owner map: CC threads for ORTHRUS, partitions for pstore.
    /// Its partition count must match the owner count.
    pub partition: PartitionMap,
    pub pin: bool,
    /// Record at most this many history events.
    pub history_limit: Option<u64>,
    pub waitfor_sweep: Duration,
}

impl EngineConfig {
    pub fn new(kind: EngineKind, threads: usize) -> Self {
        EngineConfig {
            kind,
            workers: threads,
            cc_threads: 1,
            exec_threads: threads,
            inflight: 8,
            partition: PartitionMap::modulo(threads.max(1)),
            pin: false,
            history_limit: None,
            waitfor_sweep: Duration::from_millis(1),
        }
    }

    /// ORTHRUS split into `cc` concurrency-control and `exec` execution
    /// threads, with records assigned to CC threads by key modulo.
    pub fn orthrus(cc: usize, exec: usize) -> Self {
        EngineConfig {
            cc_threads: cc,
            exec_threads: exec,
            partition: PartitionMap::modulo(cc.max(1)),
            ..Self::new(EngineKind::Orthrus, exec)
        }
    }

    pub fn with_partition(mut self, map: PartitionMap) -> Self {
        self.partition = map;
        self
    }

    pub fn with_history(mut self, limit: u64) -> Self {
        self.history_limit = Some(limit);
        self
    }

    pub fn pinned(mut self, pin: bool) -> Self {
        self.pin = pin;
        self
    }

    /// Total threads the engine runs.
    pub fn threads(&self) -> usize {
        match self.kind {
            EngineKind::Orthrus => self.cc_threads + self.exec_threads,
            _ => self.workers,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            EngineKind::Orthrus => {
                if self.exec_threads == 0 {
                    return Err(ConfigError::invalid("orthrus needs at least one execution thread"));
                }
                if self.cc_threads == 0 {
                    return Err(ConfigError::invalid("orthrus needs at least one concurrency-control thread"));
                }
                if self.inflight == 0 {
                    return Err(ConfigError::invalid("inflight must be >= 1"));
                }
                if self.partition.partitions() != self.cc_threads {
                    return Err(ConfigError::invalid("partition map must have one partition per CC thread"));
                }
                if self.cc_threads > u16::MAX as usize || self.exec_threads > u16::MAX as usize {
                    return Err(ConfigError::invalid("too many threads"));
                }
            }
            EngineKind::PStore => {
                if self.workers == 0 {
                    return Err(ConfigError::invalid("pstore needs at least one partition"));
                }
                if self.partition.partitions() != self.workers {
                    return Err(ConfigError::invalid("partition map must have one partition per worker"));
                }
            }
            EngineKind::TwoPhase(_) => {
                if self.workers == 0 {
                    return Err(ConfigError::invalid("2PL needs at least one worker"));
                }
                if self.workers > u16::MAX as usize {
                    return Err(ConfigError::invalid("too many workers"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RunLength {
    /// Warm-up excluded, then a measured window; workers are stopped at its
    /// end and drain their in-flight transactions.
    Timed { warmup: Duration, measure: Duration },
    /// Run until `n` transactions have been admitted and completed; the
    /// whole run is measured.
    Count(u64),
    /// Run a fixed feed to exhaustion.
    Exhaust,
}

#[derive(Debug, Clone, Copy)]
pub struct RunSpec {
    pub length: RunLength,
    pub watchdog: Duration,
}

impl RunSpec {
    pub fn timed(warmup: Duration, measure: Duration) -> Self {
        RunSpec { length: RunLength::Timed { warmup, measure }, watchdog: Duration::from_secs(60) + warmup + measure }
    }

    pub fn count(n: u64) -> Self {
        RunSpec { length: RunLength::Count(n), watchdog: Duration::from_secs(60) }
    }

    pub fn exhaust() -> Self {
        RunSpec { length: RunLength::Exhaust, watchdog: Duration::from_secs(60) }
    }

    pub fn with_watchdog(mut self, d: Duration) -> Self {
        self.watchdog = d;
        self
    }
}

/// A spawned worker thread and its counters.
pub struct WorkerHandle {
    pub counters: Arc<CachePadded<WorkerCounters>>,
    pub handle: JoinHandle<Vec<Event>>,
}

/// What every engine receives at launch.
pub struct Launch {
    pub db: Arc<Database>,
    pub feed: Feed,
    pub control: Arc<RunControl>,
    pub recorder: Option<Arc<HistoryRecorder>>,
    cores: Vec<core_affinity::CoreId>,
    next_core: usize,
}

impl Launch {
    /// Spawns a worker, pinned to the next core when pinning is enabled.
    pub fn spawn<F>(&mut self, name: String, role: WorkerRole, f: F) -> WorkerHandle
    where
        F: FnOnce(&WorkerCounters) -> Vec<Event> + Send + 'static,
    {
        let counters = Arc::new(WorkerCounters::new(role));
        let core = (!self.cores.is_empty()).then(|| self.cores[self.next_core % self.cores.len()]);
        self.next_core += 1;
        let c = Arc::clone(&counters);
        let handle = std::thread::Builder::new()
            .name(name)
            .spawn(move || {
                if let Some(core) = core {
                    core_affinity::set_for_current(core);
                }
                f(&c)
            })
            .expect("spawn worker thread");
        WorkerHandle { counters, handle }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    /// Counters over the measured window, execution threads.
    pub exec: CounterSnapshot,
    /// Counters over the measured window, ORTHRUS CC threads.
    pub cc: CounterSnapshot,
    /// Counters over the whole run, execution threads.
    pub total: CounterSnapshot,
    pub window: Duration,
    pub coverage: Vec<f64>,
    pub history: Option<History>,
    pub admitted: u64,
}

fn snapshot_all(workers: &[WorkerHandle]) -> Vec<CounterSnapshot> {
    workers.iter().map(|w| w.counters.snapshot()).collect()
}

/// Launches `cfg.kind` over `db`, runs it per `spec` and collects counters
/// and (optionally) the recorded history.
pub fn run(cfg: &EngineConfig, db: Arc<Database>, feed: Feed, spec: &RunSpec) -> Result<RunOutcome, BenchError> {
    cfg.validate()?;
    let limit = match spec.length {
        RunLength::Count(n) => Some(n),
        _ => None,
    };
    let control = RunControl::new(limit);
    let cores = if cfg.pin { core_affinity::get_core_ids().unwrap_or_default() } else { Vec::new() };
    let mut launch = Launch {
        db,
        feed,
        control: Arc::clone(&control),
        recorder: cfg.history_limit.map(HistoryRecorder::new),
        cores,
        next_core: 0,
    };
    let started = Instant::now();
    let workers = match cfg.kind {
        EngineKind::TwoPhase(policy) => crate::lockmgr::spawn_two_phase(cfg, policy, &mut launch),
        EngineKind::Orthrus => crate::orthrus::spawn(cfg, &mut launch),
        EngineKind::PStore => crate::pstore::spawn(cfg, &mut launch),
    };

    let (begin, end, window) = match spec.length {
        RunLength::Timed { warmup, measure } => {
            std::thread::sleep(warmup);
            let t0 = Instant::now();
            let a = snapshot_all(&workers);
            std::thread::sleep(measure);
            let b = snapshot_all(&workers);
            let window = t0.elapsed();
            control.stop();
            (a, b, window)
        }
        RunLength::Count(_) | RunLength::Exhaust => {
            let zero = vec![CounterSnapshot::default(); workers.len()];
            wait_finished(&workers, started, spec.watchdog, &control)?;
            let b = snapshot_all(&workers);
            (zero, b, started.elapsed())
        }
    };
    wait_finished(&workers, started, spec.watchdog, &control)?;

    let mut out = RunOutcome { window, admitted: control.admitted(), ..Default::default() };
    let mut logs = Vec::new();
    for (i, w) in workers.into_iter().enumerate() {
        let total = w.counters.snapshot();
        let d = end[i] - begin[i];
        match w.counters.role {
            WorkerRole::Execution => {
                out.exec.accumulate(&d);
                out.total.accumulate(&total);
                out.coverage.push(d.total_time_ns() as f64 / window.as_nanos().max(1) as f64);
            }
            WorkerRole::ConcurrencyControl => out.cc.accumulate(&d),
        }
        logs.push(w.handle.join().map_err(|_| BenchError::Config(ConfigError::invalid("worker panicked")))?);
    }
    if launch.recorder.is_some() {
        out.history = Some(History::merge(logs));
    }
    Ok(out)
}

fn wait_finished(
    workers: &[WorkerHandle],
    started: Instant,
    watchdog: Duration,
    control: &RunControl,
) -> Result<(), BenchError> {
    while !workers.iter().all(|w| w.handle.is_finished()) {
        if started.elapsed() > watchdog {
            control.stop();
            return Err(BenchError::Watchdog(watchdog));
        }
        std::thread::sleep(Duration::from_millis(1));
    }
    Ok(())
}
