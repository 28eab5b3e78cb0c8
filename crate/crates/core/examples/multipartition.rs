//! Throughput as each transaction spans more partitions.
//!
//! ```text
//! cargo run --release --example multipartition -- [seconds] [cores]
//! ```

use std::time::Duration;

use contention_lab::bench::{prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;
use contention_lab::lockmgr::DeadlockPolicy;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let secs: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let cores: usize = args.get(2).map_or(Ok(8), |s| s.parse())?;
    let mut base = BenchConfig::new(EngineKind::PStore, WorkloadKind::Multipart);
    base.cores = cores;
    base.table_size = 200_000;
    base.warmup = Duration::from_millis(300);
    base.duration = Duration::from_secs_f64(secs);
    let db = prepare(&base)?;

    let engines = [EngineKind::PStore, EngineKind::Orthrus, EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree)];
    for parts in 1..=4 {
        print!("parts={parts}");
        for e in engines {
            let cfg = BenchConfig { engine: e, parts_per_txn: parts, ..base.clone() };
            let r = run_prepared(&cfg, &db)?.report;
            print!("  {}={:.0}", e, r.committed_per_s());
        }
        println!();
    }
    println!("mixed mode:");
    for pct in [0, 10, 50, 100] {
        let cfg = BenchConfig { mp_pct: Some(pct), ..base.clone() };
        let r = run_prepared(&cfg, &db)?.report;
        println!("  pstore mp_pct={pct} committed/s={:.0}", r.committed_per_s());
    }
    Ok(())
}
