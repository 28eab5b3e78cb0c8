//! Read-only transactions: ORTHRUS with partition-local keys against 2PL on
//! a 64-record hot set, as threads are added.
//!
//! ```text
//! cargo run --release --example ycsb_readonly -- [seconds] [max_cores]
//! ```

use std::time::Duration;

use contention_lab::bench::{prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;
use contention_lab::lockmgr::DeadlockPolicy;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let secs: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let max: usize = args.get(2).map_or(Ok(8), |s| s.parse())?;

    let mut ro = BenchConfig::new(EngineKind::TwoPhase(DeadlockPolicy::WaitFor), WorkloadKind::MicroReadOnly);
    ro.table_size = 200_000;
    ro.warmup = Duration::from_millis(300);
    ro.duration = Duration::from_secs_f64(secs);
    let db = prepare(&ro)?;

    let mut cores = 2;
    while cores <= max {
        let twopl = run_prepared(&BenchConfig { cores, ..ro.clone() }, &db)?.report;
        let orthrus = BenchConfig {
            engine: EngineKind::Orthrus,
            workload: WorkloadKind::Multipart,
            read_only: true,
            cores,
            cc_threads: (cores / 2).max(1),
            partitions: Some((cores / 2).max(1)),
            parts_per_txn: 1,
            ..ro.clone()
        };
        let o = run_prepared(&orthrus, &db)?.report;
        println!(
            "cores={cores:<3} 2pl hot=64: {:>9.0}/s ({:>7.0}/s/core)   orthrus single-partition: {:>9.0}/s",
            twopl.committed_per_s(),
            twopl.committed_per_s() / cores as f64,
            o.committed_per_s()
        );
        cores *= 2;
    }
    Ok(())
}
