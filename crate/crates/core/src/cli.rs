//! Command-line front end: `run` one benchmark point, `verify` a history.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{emit_csv, run_benchmark, BenchConfig, WorkloadKind, PAPER_TABLE_SIZE};
use crate::engine::EngineKind;
use crate::metrics::Phase;
use crate::storage::PartitionScheme;
use crate::txn::AbortCause;
use crate::verify::{check_conflict_serializability, History, Serializability};

#[derive(Debug, Parser)]
#[command(name = "contention-lab", version, about = "Main-memory OLTP concurrency-control benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one benchmark point and append a CSV row.
    Run(RunArgs),
    /// Check a recorded history for conflict serializability.
    Verify {
        #[arg(long)]
        history: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PartitionArg {
    Mod,
    Hash,
    Warehouse,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_engine)]
    pub engine: EngineKind,
    #[arg(long, value_parser = parse_workload)]
    pub workload: WorkloadKind,
    #[arg(long, default_value_t = 8)]
    pub cores: usize,
    #[arg(long, default_value_t = 2)]
    pub cc_threads: usize,
    /// ORTHRUS execution threads (default: cores - cc-threads).
    #[arg(long)]
    pub exec_threads: Option<usize>,
    /// In-flight transactions per ORTHRUS execution thread.
    #[arg(long, default_value_t = 8)]
    pub inflight: usize,
    /// Hot-set size; 0 means uniform access.
    #[arg(long, default_value_t = 64)]
    pub hot: u64,
    #[arg(long, default_value_t = 4)]
    pub warehouses: u64,
    /// Percentage of two-partition transactions (multipart).
    #[arg(long)]
    pub mp_pct: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub parts_per_txn: usize,
    /// Logical partitions for multipart (default: cores).
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Multipart transactions only read.
    #[arg(long)]
    pub read_only: bool,
    #[arg(long, value_enum)]
    pub partition: Option<PartitionArg>,
    /// Measured seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Warm-up seconds excluded from measurement.
    #[arg(long, default_value_t = 2.0)]
    pub warmup: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// 10M-record micro tables instead of 1M.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub table_size: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub record_size: usize,
    /// Per-partition indexes and record storage.
    #[arg(long)]
    pub split_index: bool,
    /// Pin worker threads to cores.
    #[arg(long)]
    pub pin: bool,
    #[arg(long)]
    pub record_history: Option<PathBuf>,
    /// Events kept when recording a history.
    #[arg(long, default_value_t = 1_000_000)]
    pub history_limit: u64,
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse()
}

fn parse_workload(s: &str) -> Result<WorkloadKind, String> {
    s.parse()
}

fn seconds(s: f64, what: &str) -> Result<Duration> {
    if !s.is_finite() || s < 0.0 {
        bail!("--{what} must be a non-negative number of seconds");
    }
    Ok(Duration::from_secs_f64(s))
}

impl RunArgs {
    pub fn to_config(&self) -> Result<BenchConfig> {
        let mut c = BenchConfig::new(self.engine, self.workload);
        c.cores = self.cores;
        c.cc_threads = self.cc_threads;
        c.exec_threads = self.exec_threads;
        c.inflight = self.inflight;
        c.hot_set = self.hot;
        c.warehouses = self.warehouses;
        c.mp_pct = self.mp_pct;
        c.parts_per_txn = self.parts_per_txn;
        c.partitions = self.partitions;
        c.read_only = self.read_only;
        c.record_size = self.record_size;
        c.split_index = self.split_index;
        c.pin = self.pin;
        c.seed = self.seed;
        c.duration = seconds(self.duration, "duration")?;
        c.warmup = seconds(self.warmup, "warmup")?;
        if self.paper_scale {
            c.table_size = PAPER_TABLE_SIZE;
        }
        if let Some(t) = self.table_size {
            c.table_size = t;
        }
        c.scheme = self.partition.map(|p| match p {
            PartitionArg::Mod => PartitionScheme::Modulo,
            PartitionArg::Hash => PartitionScheme::Hash { seed: self.seed },
            PartitionArg::Warehouse => PartitionScheme::Warehouse,
        });
        if self.record_history.is_some() {
            c.history_limit = Some(self.history_limit);
        }
        Ok(c)
    }
}

pub fn run(args: &RunArgs) -> Result<()> {
    let cfg = args.to_config()?;
    if cfg.duration.is_zero() {
        bail!("--duration must be positive");
    }
    let res = run_benchmark(&cfg)?;
    let r = &res.report;
    println!(
        "{} {} cores={} committed/s={:.0} aborts(deadlock={} waitdie={} ollp={}) messages={}",
        r.engine,
        r.workload,
        r.cores,
        r.committed_per_s(),
        r.aborts(AbortCause::Deadlock),
        r.aborts(AbortCause::WaitDie),
        r.aborts(AbortCause::OllpMiss),
        r.messages()
    );
    let parts: Vec<String> = Phase::ALL.iter().map(|&p| format!("{}={:.1}%", p.name(), r.pct(p))).collect();
    println!("breakdown {}", parts.join(" "));
    if let Some(path) = &args.csv {
        emit_csv(r, path).with_context(|| format!("writing {}", path.display()))?;
    }
    if let (Some(path), Some(h)) = (&args.record_history, &res.history) {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        h.write_to(BufWriter::new(f))?;
        println!("history: {} events, {} committed -> {}", h.len(), h.committed_count(), path.display());
    }
    Ok(())
}

/// Returns true when the history is serializable.
pub fn verify(path: &PathBuf) -> Result<bool> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let h = History::parse(BufReader::new(f))?;
    match check_conflict_serializability(&h) {
        Serializability::Serializable(order) => {
            println!("serializable: {} committed transactions", order.len());
            Ok(true)
        }
        Serializability::Cycle(c) => {
            let ids: Vec<String> = c.iter().map(|t| t.to_string()).collect();
            println!("NOT serializable: cycle {}", ids.join(" -> "));
            Ok(false)
        }
    }
}

pub fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(&args),
        Command::Verify { history } => {
            if verify(&history)? {
                Ok(())
            } else {
                std::process::exit(1)
            }
        }
    }
}
