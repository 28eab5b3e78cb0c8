//! Counts acquisition messages in a deterministic single-threaded run of the
//! ORTHRUS mesh: one per CC thread a transaction touches, plus the reply.

use std::sync::Arc;

use contention_lab::bench::{MultipartConfig, MultipartWorkload};
use contention_lab::engine::Feed;
use contention_lab::orthrus::Sim;
use contention_lab::storage::{Database, TableConfig};
use contention_lab::txn::Procedure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let ncc = 5;
    let txns_per_point = 2000;
    println!("{:>8} {:>10} {:>12} {:>10}", "cc_hit", "txns", "acq_msgs", "per_txn");
    for spread in 1..=ncc {
        let cfg = MultipartConfig { table_size: 50_000, record_size: 64, partitions: ncc, parts_per_txn: spread, ..Default::default() };
        let gen = MultipartWorkload::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(spread as u64);
        let txns: Vec<Arc<dyn Procedure>> =
            (0..txns_per_point).map(|i| Arc::new(gen.gen_txn(&mut rng, i)) as Arc<dyn Procedure>).collect();

        let mut db = Database::new(1);
        db.create_table(TableConfig::new(50_000, 64)).unwrap();
        let mut sim = Sim::new(ncc, 3, 4, cfg.partition_map(), Arc::new(db), Feed::fixed(txns), None);
        sim.run_to_completion(10_000_000).expect("mesh drains");
        let s = sim.exec_totals();
        println!(
            "{:>8} {:>10} {:>12} {:>10.2}",
            spread,
            s.committed,
            s.acquire_messages,
            s.acquire_messages as f64 / s.committed as f64
        );
    }
}
