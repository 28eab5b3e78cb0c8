//! Records a history from a concurrent run, checks it for conflict
//! serializability, and replays the serial order to compare final states.

use std::sync::Arc;

use contention_lab::bench::transfer::{load_accounts, total_balance};
use contention_lab::bench::TransferWorkload;
use contention_lab::engine::{run, EngineConfig, EngineKind, Feed, RunSpec};
use contention_lab::lockmgr::DeadlockPolicy;
use contention_lab::txn::{AbortCause, Procedure};
use contention_lab::verify::{check_conflict_serializability, serial_oracle, Serializability};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let accounts = 64;
    let gen = TransferWorkload { accounts, max_amount: 300 };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let txns: Vec<Arc<dyn Procedure>> = (0..1000).map(|_| Arc::new(gen.gen_txn(&mut rng)) as Arc<dyn Procedure>).collect();

    let db = Arc::new(load_accounts(accounts, 64, 1)?);
    let initial = total_balance(&db);
    let cfg = EngineConfig::new(EngineKind::TwoPhase(DeadlockPolicy::Dreadlocks), 4).with_history(u64::MAX);
    let out = run(&cfg, Arc::clone(&db), Feed::fixed(txns.clone()), &RunSpec::exhaust())?;
    let history = out.history.expect("recording was enabled");
    println!("{} events, {} committed, {} deadlock aborts", history.len(), history.committed_count(), out.total.aborts[AbortCause::Deadlock.index()]);

    let path = std::env::temp_dir().join("contention-lab-history.txt");
    history.write_to(std::fs::File::create(&path)?)?;
    println!("history written to {} (check it with `contention-lab verify --history ...`)", path.display());

    let Serializability::Serializable(order) = check_conflict_serializability(&history) else {
        anyhow::bail!("history is not conflict-serializable");
    };
    let replay = load_accounts(accounts, 64, 1)?;
    let idx: Vec<usize> = order.iter().map(|t| t.0 as usize - 1).collect();
    let serial = serial_oracle(&replay, &txns, &idx)?;
    println!("serial replay matches: {}", serial == db.snapshot());
    println!("balance conserved: {}", total_balance(&db) == initial);
    Ok(())
}
