//! Where execution threads spend their time, at low and high contention.
//!
//! ```text
//! cargo run --release --example breakdown -- [seconds] [cores]
//! ```

use std::time::Duration;

use contention_lab::bench::{prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;
use contention_lab::metrics::Phase;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let secs: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let cores: usize = args.get(2).map_or(Ok(8), |s| s.parse())?;
    let mut base = BenchConfig::new(EngineKind::Orthrus, WorkloadKind::MicroRmw);
    base.cores = cores;
    base.table_size = 200_000;
    base.warmup = Duration::from_millis(300);
    base.duration = Duration::from_secs_f64(secs);
    let db = prepare(&base)?;

    print!("{:<18}{:>6}", "engine", "hot");
    for p in Phase::ALL {
        print!("{:>14}", p.name());
    }
    println!();
    for e in EngineKind::ALL {
        for hot in [0, 16] {
            let cfg = BenchConfig { engine: e, hot_set: hot, ..base.clone() };
            let r = run_prepared(&cfg, &db)?.report;
            print!("{:<18}{:>6}", e.name(), if hot == 0 { "none".to_string() } else { hot.to_string() });
            for p in Phase::ALL {
                print!("{:>13.1}%", r.pct(p));
            }
            println!();
        }
    }
    Ok(())
}
