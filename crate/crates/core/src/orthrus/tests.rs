use super::*;
use crate::engine::Feed;
use crate::storage::{get_u64, put_u64, Database, TableConfig, TableId};
use crate::txn::{Access, Procedure, TxnAbort};
use crate::verify::{check_conflict_serializability, HistoryRecorder};

const T: TableId = TableId(0);

fn rid(k: u64) -> RecordId {
    RecordId::new(T, k)
}

fn est(keys: &[u64]) -> AccessEstimate {
    AccessEstimate::from_entries(keys.iter().map(|&k| (rid(k), LockMode::Exclusive)), true)
}

/// Increments word 0 of each key.
#[derive(Debug)]
struct Bump(Vec<u64>);

impl Procedure for Bump {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        for &k in &self.0 {
            ctx.update(rid(k), &mut |b| {
                let v = get_u64(b, 0);
                put_u64(b, 0, v + 1)
            })?;
        }
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        Some(est(&self.0))
    }
}

/// Reads `from`, then bumps the key its word 1 points at.
#[derive(Debug)]
struct Chase {
    from: u64,
    n: u64,
}

impl Procedure for Chase {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        let mut b = vec![0u8; ctx.record_size(T)];
        ctx.read_for_update(rid(self.from), &mut b)?;
        let target = get_u64(&b, 8) % self.n;
        let next = get_u64(&b, 8).wrapping_add(1);
        put_u64(&mut b, 8, next);
        ctx.write(rid(self.from), &b)?;
        if target != self.from {
            ctx.update(rid(target), &mut |b| {
                let v = get_u64(b, 0);
                put_u64(b, 0, v + 1)
            })?;
        }
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        None
    }
}

fn db(n: usize) -> Arc<Database> {
    let mut db = Database::new(7);
    db.create_table(TableConfig::new(n, 16)).unwrap();
    for k in 0..n as u64 {
        let mut b = vec![0u8; 16];
        put_u64(&mut b, 8, k * 7 + 3);
        db.write(rid(k), &b).unwrap();
    }
    Arc::new(db)
}

fn total(db: &Database, n: u64) -> u64 {
    (0..n).map(|k| get_u64(&db.read(rid(k)).unwrap().payload, 0)).sum()
}

fn feed(txns: Vec<Arc<dyn Procedure>>) -> Feed {
    Feed::fixed(txns)
}

#[test]
fn partition_examples() {
    let m = PartitionMap::modulo(3);
    assert_eq!(partition_of(&m, rid(0)), 0);
    assert_eq!(partition_of(&m, rid(4)), 1);
    assert_eq!(partition_of(&m, rid(8)), 2);
}

#[test]
fn chain_examples() {
    let m = PartitionMap::modulo(3);
    // records on CC 2, 0, 1: visited 0, 1, 2 with 4 messages
    let (c, msgs) = build_request_chain(&est(&[5, 3, 4]), &m);
    assert_eq!(c.visit_order(), vec![0, 1, 2]);
    assert_eq!(msgs, 4);
    assert_eq!(c.segment(0), &[(rid(3), LockMode::Exclusive)]);

    let (c, msgs) = build_request_chain(&est(&[9, 3, 0]), &m);
    assert_eq!(c.visit_order(), vec![0]);
    assert_eq!(msgs, 2);
    assert_eq!(c.entries.iter().map(|e| e.0.key).collect::<Vec<_>>(), vec![0, 3, 9]);

    let (c, msgs) = build_request_chain(&est(&[2, 5, 1]), &m);
    assert_eq!(c.visit_order(), vec![1, 2]);
    assert_eq!(msgs, 3);
}

#[test]
fn chain_merges_duplicate_modes() {
    let m = PartitionMap::modulo(2);
    let e = AccessEstimate::from_entries([(rid(4), LockMode::Shared), (rid(4), LockMode::Exclusive)], true);
    let (c, _) = build_request_chain(&e, &m);
    assert_eq!(c.entries, vec![(rid(4), LockMode::Exclusive)]);
}

#[test]
fn three_partition_txn_uses_four_messages() {
    let d = db(9);
    let mut sim = Sim::new(3, 1, 1, PartitionMap::modulo(3), Arc::clone(&d), feed(vec![Arc::new(Bump(vec![2, 0, 1]))]), None);
    sim.run_to_completion(100).expect("finishes");
    let s = sim.exec_totals();
    assert_eq!(s.committed, 1);
    assert_eq!(s.acquire_messages, 4);
    assert_eq!(s.release_messages, 6);
    assert_eq!(sim.execs[0].stats().hop_mismatches, 0);
    let forwards: u64 = sim.ccs.iter().map(|c| c.stats().forwards).sum();
    assert_eq!(forwards, 2);
    assert_eq!(total(&d, 9), 3);
}

#[test]
fn forward_waits_for_local_release() {
    // T1 holds record 0 on CC 0; T2 needs 0 (CC 0) and 1 (CC 1) and must not
    // reach CC 1 before T1 releases.
    let d = db(4);
    let txns: Vec<Arc<dyn Procedure>> = vec![Arc::new(Bump(vec![0])), Arc::new(Bump(vec![0, 1]))];
    let mut sim = Sim::new(2, 2, 1, PartitionMap::modulo(2), Arc::clone(&d), feed(txns), None);
    // exec 0 admits T1 and exec 1 admits T2
    sim.step_exec(0);
    sim.step_exec(1);
    sim.step_cc(0);
    assert_eq!(sim.ccs[0].waiting_chains(), 1);
    assert_eq!(sim.ccs[0].stats().replies, 1);
    assert_eq!(sim.ccs[0].stats().forwards, 0);
    for _ in 0..5 {
        sim.step_cc(1);
    }
    assert_eq!(sim.ccs[1].stats().acquires, 0);
    // T1 runs and releases
    sim.step_exec(0);
    assert_eq!(sim.execs[0].stats().committed, 1);
    sim.step_cc(0);
    assert_eq!(sim.ccs[0].stats().forwards, 1);
    sim.run_to_completion(100).expect("finishes");
    assert_eq!(sim.exec_totals().committed, 2);
    assert_eq!(total(&d, 4), 3);
    sim.audit().unwrap();
}

#[test]
fn exactly_one_reply_per_chain() {
    let d = db(12);
    let txns: Vec<Arc<dyn Procedure>> =
        vec![Arc::new(Bump(vec![0, 1, 2])), Arc::new(Bump(vec![2, 3])), Arc::new(Bump(vec![1, 5, 6]))];
    let mut sim = Sim::new(3, 3, 2, PartitionMap::modulo(3), Arc::clone(&d), feed(txns), None);
    sim.run_to_completion(1000).expect("finishes");
    let replies: u64 = sim.ccs.iter().map(|c| c.stats().replies).sum();
    assert_eq!(replies, 3);
    let grants: u64 = sim.execs.iter().map(|e| e.stats().grants).sum();
    assert_eq!(grants, 3);
    assert_eq!(sim.exec_totals().acquire_messages, 4 + 3 + 4);
}

#[test]
fn single_cc_costs_two_messages_each() {
    let d = db(16);
    let txns: Vec<Arc<dyn Procedure>> = (0..100u64).map(|i| Arc::new(Bump(vec![i % 16, (i + 3) % 16])) as _).collect();
    let mut sim = Sim::new(1, 1, 4, PartitionMap::modulo(1), Arc::clone(&d), feed(txns), None);
    sim.run_to_completion(10_000).expect("finishes");
    let s = sim.exec_totals();
    assert_eq!(s.committed, 100);
    assert_eq!(s.acquire_messages, 200);
    assert_eq!(s.release_messages, 200);
    assert_eq!(total(&d, 16), 200);
}

#[test]
fn ollp_restart_widens_and_commits() {
    let n = 8u64;
    let d = db(n as usize);
    // all chase from 0, so every later one sees a pointer moved by the one before
    let txns: Vec<Arc<dyn Procedure>> = (0..20).map(|_| Arc::new(Chase { from: 0, n }) as _).collect();
    let rec = HistoryRecorder::new(u64::MAX);
    let mut sim = Sim::new(2, 2, 4, PartitionMap::modulo(2), Arc::clone(&d), feed(txns), Some(&rec));
    sim.run_to_completion(100_000).expect("finishes");
    let s = sim.exec_totals();
    assert_eq!(s.committed, 20);
    let restarts: u64 = sim.execs.iter().map(|e| e.stats().ollp_restarts).sum();
    assert!(restarts > 0, "reconnaissance all ran before any execution");
    assert_eq!(s.aborts[crate::txn::AbortCause::OllpMiss.index()], restarts);
    sim.audit().unwrap();
    let committed_bumps: u64 = (0..n).filter(|&k| k != 0).map(|k| get_u64(&d.read(rid(k)).unwrap().payload, 0)).sum();
    assert!(committed_bumps <= 20);
    let h = sim.into_history();
    assert!(check_conflict_serializability(&h).is_serializable());
}

#[test]
fn tiny_queues_overflow_without_loss() {
    let d = db(32);
    let txns: Vec<Arc<dyn Procedure>> =
        (0..300u64).map(|i| Arc::new(Bump(vec![i % 32, (i * 5 + 1) % 32, (i * 11 + 2) % 32])) as _).collect();
    let mut sim = Sim::with_capacity(4, 3, 8, PartitionMap::modulo(4), Arc::clone(&d), feed(txns), None, 2);
    sim.run_to_completion(100_000).expect("finishes");
    assert_eq!(sim.exec_totals().committed, 300);
    assert_eq!(total(&d, 32), 900);
    assert!(sim.ccs.iter().all(|c| c.active_chains() == 0 && c.locked_records() == 0));
}

#[test]
fn threaded_run_matches_counts() {
    use crate::engine::{run, EngineConfig, RunSpec};
    let d = db(64);
    let txns: Vec<Arc<dyn Procedure>> =
        (0..2000u64).map(|i| Arc::new(Bump(vec![i % 64, (i * 7 + 5) % 64])) as _).collect();
    let cfg = EngineConfig::orthrus(2, 2).with_partition(PartitionMap::modulo(2)).with_history(u64::MAX);
    let out = run(&cfg, Arc::clone(&d), feed(txns), &RunSpec::exhaust()).unwrap();
    assert_eq!(out.total.committed, 2000);
    assert_eq!(total(&d, 64), 4000);
    assert!(check_conflict_serializability(out.history.as_ref().unwrap()).is_serializable());
}

#[test]
fn zero_exec_threads_is_a_config_error() {
    assert!(crate::engine::EngineConfig::orthrus(2, 0).validate().is_err());
    assert!(crate::engine::EngineConfig::orthrus(0, 2).validate().is_err());
}
