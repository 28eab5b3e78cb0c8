//! Concurrency-control lab for a main-memory OLTP engine.
//!
//! Six engines run the same transaction procedures against the same
//! in-memory tables:
//!
//! - `orthrus`: concurrency-control threads own disjoint slices of the lock
//!   table and talk to execution threads over SPSC queues
//! - `2pl-waitfor`, `2pl-waitdie`, `2pl-dreadlocks`: a shared lock manager
//!   with a dynamic deadlock handler
//! - `2pl-deadlockfree`: the same lock manager, locks taken in record order
//! - `pstore`: one lock per partition, taken in partition order
//!
//! The runnable examples are the main way in:
//!
//! ```text
//! examples/
//! ├── hot_cold_sweep.rs      # 2PL deadlock policies as the hot set shrinks
//! ├── deadlock_handlers.rs   # a two-transaction cycle under each policy
//! ├── orthrus_messages.rs    # acquisition messages per CC thread touched
//! ├── thread_allocation.rs   # ORTHRUS CC threads vs execution threads
//! ├── multipartition.rs      # partition-spanning transactions
//! ├── tpcc.rs                # NewOrder + Payment on every engine
//! ├── breakdown.rs           # where execution time goes
//! ├── ycsb_readonly.rs       # read-only scaling
//! └── verify_history.rs      # record, check, and replay a history
//! ```
//!
//! ```bash
//! cargo run --release --example hot_cold_sweep -- 2 8 sweep.csv
//! cargo run --release --example verify_history
//! ```
//!
//! A benchmark point from code:
//!
//! ```no_run
//! use contention_lab::bench::{run_benchmark, BenchConfig, WorkloadKind};
//! use contention_lab::engine::EngineKind;
//!
//! let mut cfg = BenchConfig::new(EngineKind::Orthrus, WorkloadKind::MicroRmw);
//! cfg.hot_set = 16;
//! let r = run_benchmark(&cfg).unwrap().report;
//! println!("{:.0} txn/s", r.committed_per_s());
//! ```

pub mod bench;
pub mod cli;
pub mod engine;
pub mod error;
pub mod lockmgr;
pub mod metrics;
pub mod orthrus;
pub mod pstore;
pub mod storage;
pub mod txn;
pub mod verify;
