//! Throughput of the four 2PL deadlock policies as the hot set shrinks.
//!
//! ```text
//! cargo run --release --example hot_cold_sweep -- [seconds] [cores] [out.csv]
//! ```

use std::time::Duration;

use contention_lab::bench::{emit_csv, prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;
use contention_lab::lockmgr::DeadlockPolicy;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let secs: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let cores: usize = args.get(2).map_or(Ok(8), |s| s.parse())?;
    let csv = args.get(3);

    let mut base = BenchConfig::new(EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree), WorkloadKind::MicroRmw);
    base.cores = cores;
    base.table_size = 200_000;
    base.warmup = Duration::from_millis(300);
    base.duration = Duration::from_secs_f64(secs);
    let db = prepare(&base)?;

    print!("{:>6}", "hot");
    for p in DeadlockPolicy::ALL {
        print!("{:>18}", p.name());
    }
    println!();
    for hot in [1024, 256, 64, 16] {
        print!("{hot:>6}");
        for p in DeadlockPolicy::ALL {
            let cfg = BenchConfig { engine: EngineKind::TwoPhase(p), hot_set: hot, ..base.clone() };
            let r = run_prepared(&cfg, &db)?.report;
            print!("{:>18.0}", r.committed_per_s());
            if let Some(path) = csv {
                emit_csv(&r, path.as_ref())?;
            }
        }
        println!();
    }
    Ok(())
}
