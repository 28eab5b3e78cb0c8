//! ORTHRUS throughput with a fixed number of CC threads while execution
//! threads are added.
//!
//! ```text
//! cargo run --release --example thread_allocation -- [seconds]
//! ```

use std::time::Duration;

use contention_lab::bench::{prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;

fn main() -> anyhow::Result<()> {
    let secs: f64 = std::env::args().nth(1).map_or(Ok(1.0), |s| s.parse())?;
    let mut base = BenchConfig::new(EngineKind::Orthrus, WorkloadKind::MicroRmw);
    base.table_size = 200_000;
    base.hot_set = 0;
    base.warmup = Duration::from_millis(300);
    base.duration = Duration::from_secs_f64(secs);
    let db = prepare(&base)?;

    for cc in [1, 2] {
        for exec in 1..=6 {
            let cfg = BenchConfig { cc_threads: cc, exec_threads: Some(exec), cores: cc + exec, ..base.clone() };
            let r = run_prepared(&cfg, &db)?.report;
            println!("cc={cc} exec={exec} committed/s={:.0}", r.committed_per_s());
        }
    }
    Ok(())
}
