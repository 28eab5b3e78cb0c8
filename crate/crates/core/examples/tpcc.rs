//! NewOrder/Payment on a few warehouses, every engine.
//!
//! ```text
//! cargo run --release --example tpcc -- [seconds] [cores] [warehouses]
//! ```

use std::time::Duration;

use contention_lab::bench::{prepare, run_prepared, BenchConfig, WorkloadKind};
use contention_lab::engine::EngineKind;
use contention_lab::txn::{AbortCause, TxnClass};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let secs: f64 = args.get(1).map_or(Ok(1.0), |s| s.parse())?;
    let cores: usize = args.get(2).map_or(Ok(8), |s| s.parse())?;
    let warehouses: u64 = args.get(3).map_or(Ok(4), |s| s.parse())?;

    let mut base = BenchConfig::new(EngineKind::Orthrus, WorkloadKind::Tpcc);
    base.cores = cores;
    base.cc_threads = (cores / 4).max(1);
    base.warehouses = warehouses;
    base.warmup = Duration::from_millis(300);
    base.duration = Duration::from_secs_f64(secs);
    let db = prepare(&base)?;

    for e in EngineKind::ALL {
        let cfg = BenchConfig { engine: e, ..base.clone() };
        let r = run_prepared(&cfg, &db)?.report;
        println!(
            "{:<18} committed/s={:>8.0} neworder={} payment={} payment_recon={:.1}% ollp_aborts={} deadlocks={} waitdie={}",
            e.name(),
            r.committed_per_s(),
            r.exec.committed_by_class[TxnClass::NewOrder.index()],
            r.exec.committed_by_class[TxnClass::Payment.index()],
            100.0 * r.recon_fraction(TxnClass::Payment),
            r.aborts(AbortCause::OllpMiss),
            r.aborts(AbortCause::Deadlock),
            r.aborts(AbortCause::WaitDie),
        );
    }
    Ok(())
}
