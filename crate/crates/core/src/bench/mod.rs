//! Workload generators and the benchmark driver.

pub mod micro;
pub mod multipart;
pub mod tpcc;
pub mod transfer;

use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::engine::{run, EngineConfig, EngineKind, Feed, RunSpec, Workload};
use crate::error::{BenchError, ConfigError};
use crate::metrics::{MetricsReport, Phase};
use crate::storage::{Database, PartitionMap, PartitionScheme, TableConfig};
use crate::txn::AbortCause;
use crate::verify::History;

pub use micro::{MicroConfig, MicroTxn, MicroWorkload, OpKind};
pub use multipart::{MultipartConfig, MultipartWorkload};
pub use tpcc::{TpccConfig, TpccWorkload};
pub use transfer::{TransferTxn, TransferWorkload};

pub const DESK_TABLE_SIZE: u64 = 1_000_000;
pub const PAPER_TABLE_SIZE: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    MicroRmw,
    MicroReadOnly,
    Multipart,
    Tpcc,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::MicroRmw => "micro-rmw",
            WorkloadKind::MicroReadOnly => "micro-readonly",
            WorkloadKind::Multipart => "multipart",
            WorkloadKind::Tpcc => "tpcc",
        }
    }

    fn default_scheme(self, seed: u64) -> PartitionScheme {
        match self {
            WorkloadKind::MicroRmw | WorkloadKind::MicroReadOnly => PartitionScheme::Hash { seed },
            WorkloadKind::Multipart => PartitionScheme::Modulo,
            WorkloadKind::Tpcc => PartitionScheme::Warehouse,
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [WorkloadKind::MicroRmw, WorkloadKind::MicroReadOnly, WorkloadKind::Multipart, WorkloadKind::Tpcc]
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| format!("unknown workload {s}; expected micro-rmw, micro-readonly, multipart or tpcc"))
    }
}

/// Everything needed to run one benchmark point.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub engine: EngineKind,
    pub workload: WorkloadKind,
    /// Total worker threads (ORTHRUS: CC plus execution).
    pub cores: usize,
    pub cc_threads: usize,
    /// ORTHRUS execution threads; defaults to `cores - cc_threads`.
    pub exec_threads: Option<usize>,
    pub inflight: usize,
    pub hot_set: u64,
    pub hot_ops: usize,
    pub table_size: u64,
    pub record_size: usize,
    pub warehouses: u64,
    pub mp_pct: Option<u32>,
    pub parts_per_txn: usize,
    /// Logical partitions of the multipart workload; defaults to `cores`.
    pub partitions: Option<usize>,
    /// Multipart transactions read instead of read-modify-write.
    pub read_only: bool,
    pub scheme: Option<PartitionScheme>,
    pub split_index: bool,
    pub warmup: Duration,
    pub duration: Duration,
    pub seed: u64,
    pub history_limit: Option<u64>,
    pub pin: bool,
}

impl BenchConfig {
    pub fn new(engine: EngineKind, workload: WorkloadKind) -> Self {
        BenchConfig {
            engine,
            workload,
            cores: 8,
            cc_threads: 2,
            exec_threads: None,
            inflight: 8,
            hot_set: 64,
            hot_ops: 2,
            table_size: DESK_TABLE_SIZE,
            record_size: 1000,
            warehouses: 4,
            mp_pct: None,
            parts_per_txn: 1,
            partitions: None,
            read_only: false,
            scheme: None,
            split_index: false,
            warmup: Duration::from_secs(2),
            duration: Duration::from_secs(5),
            seed: 1,
            history_limit: None,
            pin: false,
        }
    }

    pub fn paper_scale(mut self) -> Self {
        self.table_size = PAPER_TABLE_SIZE;
        self
    }

    pub fn exec_threads(&self) -> usize {
        match self.engine {
            EngineKind::Orthrus => self.exec_threads.unwrap_or(self.cores.saturating_sub(self.cc_threads)),
            _ => self.cores,
        }
    }

    fn scheme(&self) -> PartitionScheme {
        self.scheme.unwrap_or_else(|| self.workload.default_scheme(self.seed))
    }

    /// Record-to-owner map: CC threads for ORTHRUS, workers otherwise.
    pub fn partition_map(&self) -> PartitionMap {
        let owners = match self.engine {
            EngineKind::Orthrus => self.cc_threads,
            _ => self.cores,
        };
        PartitionMap::new(owners.max(1), self.scheme())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let map = self.partition_map();
        let mut cfg = match self.engine {
            EngineKind::Orthrus => EngineConfig::orthrus(self.cc_threads, self.exec_threads()),
            kind => EngineConfig::new(kind, self.cores),
        }
        .with_partition(map)
        .pinned(self.pin);
        cfg.inflight = self.inflight;
        cfg.history_limit = self.history_limit;
        cfg
    }

    pub fn micro_config(&self) -> MicroConfig {
        MicroConfig {
            table_size: self.table_size,
            record_size: self.record_size,
            ops_per_txn: 10,
            hot_set_size: self.hot_set,
            hot_ops_per_txn: self.hot_ops,
            op_kind: if self.workload == WorkloadKind::MicroReadOnly { OpKind::ReadOnly } else { OpKind::Rmw },
        }
    }

    pub fn multipart_config(&self) -> MultipartConfig {
        MultipartConfig {
            table_size: self.table_size,
            record_size: self.record_size,
            ops_per_txn: 10,
            partitions: self.partitions.unwrap_or(self.cores),
            parts_per_txn: self.parts_per_txn,
            mp_pct: self.mp_pct,
            op_kind: if self.read_only { OpKind::ReadOnly } else { OpKind::Rmw },
        }
    }

    pub fn tpcc_config(&self) -> TpccConfig {
        TpccConfig { warehouses: self.warehouses, ..TpccConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cores == 0 {
            return Err(ConfigError::invalid("cores must be >= 1"));
        }
        if self.engine == EngineKind::Orthrus && self.exec_threads() == 0 {
            return Err(ConfigError::invalid("orthrus needs cores > cc_threads (or --exec-threads)"));
        }
        self.engine_config().validate()
    }

    pub fn workload(&self) -> Result<Arc<dyn Workload>, ConfigError> {
        Ok(match self.workload {
            WorkloadKind::MicroRmw | WorkloadKind::MicroReadOnly => Arc::new(MicroWorkload::new(self.micro_config())?),
            WorkloadKind::Multipart => Arc::new(MultipartWorkload::new(self.multipart_config())?),
            WorkloadKind::Tpcc => Arc::new(TpccWorkload::new(self.tpcc_config())?),
        })
    }

    pub fn load_database(&self) -> Result<Database, BenchError> {
        let split = self.split_index.then(|| self.partition_map());
        match self.workload {
            WorkloadKind::Tpcc => Ok(tpcc::load(&self.tpcc_config(), self.seed, split)?),
            _ => {
                let mut db = Database::new(self.seed);
                let mut t = TableConfig::new(self.table_size as usize, self.record_size);
                if let Some(m) = split {
                    t = t.split(m);
                }
                db.create_table(t)?;
                Ok(db)
            }
        }
    }
}

/// A loaded database, reusable across runs of the same workload.
pub struct Prepared {
    pub db: Arc<Database>,
}

pub fn prepare(cfg: &BenchConfig) -> Result<Prepared, BenchError> {
    cfg.validate()?;
    cfg.workload()?;
    Ok(Prepared { db: Arc::new(cfg.load_database()?) })
}

#[derive(Debug)]
pub struct BenchResult {
    pub report: MetricsReport,
    pub history: Option<History>,
}

/// Loads, runs for `warmup + duration`, and reports the measured window.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    let p = prepare(cfg)?;
    run_prepared(cfg, &p)
}

/// Runs against an already loaded database. The generator is rebuilt from
/// `cfg`, so one database can serve several hot-set sizes.
pub fn run_prepared(cfg: &BenchConfig, p: &Prepared) -> Result<BenchResult, BenchError> {
    if cfg.duration.is_zero() {
        return Err(BenchError::EmptyRun);
    }
    cfg.validate()?;
    let workload = cfg.workload()?;
    let engine = cfg.engine_config();
    let spec = RunSpec::timed(cfg.warmup, cfg.duration);
    let out = run(&engine, Arc::clone(&p.db), Feed::generated(workload, cfg.seed), &spec)?;
    let report = MetricsReport {
        engine: cfg.engine.name().to_string(),
        workload: cfg.workload.name().to_string(),
        cores: cfg.cores,
        cc_threads: if cfg.engine == EngineKind::Orthrus { cfg.cc_threads } else { 0 },
        exec_threads: cfg.exec_threads(),
        hot_set: if matches!(cfg.workload, WorkloadKind::MicroRmw | WorkloadKind::MicroReadOnly) { cfg.hot_set } else { 0 },
        warehouses: if cfg.workload == WorkloadKind::Tpcc { cfg.warehouses as u32 } else { 0 },
        mp_pct: cfg.mp_pct.unwrap_or(0),
        parts_per_txn: if cfg.workload == WorkloadKind::Multipart && cfg.mp_pct.is_none() { cfg.parts_per_txn } else { 0 },
        seed: cfg.seed,
        duration: out.window,
        exec: out.exec,
        cc: out.cc,
        coverage: out.coverage,
    };
    Ok(BenchResult { report, history: out.history })
}

pub const CSV_HEADER: [&str; 21] = [
    "engine",
    "workload",
    "cores",
    "cc_threads",
    "exec_threads",
    "hot_set",
    "warehouses",
    "mp_pct",
    "parts_per_txn",
    "duration_s",
    "committed_per_s",
    "abort_deadlock",
    "abort_waitdie",
    "abort_ollp",
    "messages",
    "pct_execute",
    "pct_lockwait",
    "pct_lockmgr",
    "pct_messaging",
    "pct_idle",
    "seed",
];

pub fn csv_row(r: &MetricsReport) -> Vec<String> {
    let pct = |p: Phase| format!("{:.2}", r.pct(p));
    vec![
        r.engine.clone(),
        r.workload.clone(),
        r.cores.to_string(),
        r.cc_threads.to_string(),
        r.exec_threads.to_string(),
        r.hot_set.to_string(),
        r.warehouses.to_string(),
        r.mp_pct.to_string(),
        r.parts_per_txn.to_string(),
        format!("{:.3}", r.duration.as_secs_f64()),
        format!("{:.1}", r.committed_per_s()),
        r.aborts(AbortCause::Deadlock).to_string(),
        r.aborts(AbortCause::WaitDie).to_string(),
        r.aborts(AbortCause::OllpMiss).to_string(),
        r.messages().to_string(),
        pct(Phase::Execute),
        pct(Phase::LockWait),
        pct(Phase::LockManager),
        pct(Phase::Messaging),
        pct(Phase::Idle),
        r.seed.to_string(),
    ]
}

/// Appends one row to `path`, writing the header first if the file is new
/// or empty.
pub fn emit_csv(report: &MetricsReport, path: &Path) -> Result<(), BenchError> {
    if report.duration.is_zero() {
        return Err(BenchError::EmptyRun);
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER).map_err(csv_err)?;
    }
    w.write_record(csv_row(report)).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> BenchError {
    BenchError::Io(std::io::Error::other(e))
}
