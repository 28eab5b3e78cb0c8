//! Transfers conserve the total balance on every engine, and a stub engine
//! that skips a lock is caught by both the conservation check and the
//! serializability checker.

use std::sync::Arc;

use contention_lab::bench::transfer::{load_accounts, total_balance, TransferTxn, ACCOUNTS, INITIAL_BALANCE};
use contention_lab::bench::TransferWorkload;
use contention_lab::engine::{run, EngineConfig, EngineKind, Feed, RunSpec};
use contention_lab::storage::{Database, RecordId, TableId};
use contention_lab::txn::{Access, Procedure, TxnAbort};
use contention_lab::verify::{check_conflict_serializability, conservation_check, EventKind, History};

const ACCOUNTS_N: u64 = 256;

fn expected() -> i128 {
    ACCOUNTS_N as i128 * INITIAL_BALANCE as i128
}

#[test]
fn hundred_thousand_transfers_on_every_engine() {
    for kind in EngineKind::ALL {
        let cfg = match kind {
            EngineKind::Orthrus => EngineConfig::orthrus(2, 2),
            k => EngineConfig::new(k, 4),
        };
        let db = Arc::new(load_accounts(ACCOUNTS_N, 64, 1).unwrap());
        let feed = Feed::generated(Arc::new(TransferWorkload { accounts: ACCOUNTS_N, max_amount: 500 }), 9);
        let out = run(&cfg, Arc::clone(&db), feed, &RunSpec::count(100_000)).unwrap();
        assert_eq!(out.total.committed, 100_000, "{kind}");
        assert!(conservation_check(&db, total_balance, expected()), "{kind}: balance drifted");
    }
}

#[test]
fn zero_transfers_leave_the_total() {
    let db = Arc::new(load_accounts(ACCOUNTS_N, 64, 1).unwrap());
    let out = run(&EngineConfig::new(EngineKind::PStore, 2), Arc::clone(&db), Feed::fixed(Vec::new()), &RunSpec::exhaust())
        .unwrap();
    assert_eq!(out.total.committed, 0);
    assert!(conservation_check(&db, total_balance, expected()));
}

/// Reads straight from the database and buffers writes, logging as it
/// goes: what an engine that never locks `to` would do.
struct Unlocked<'a> {
    db: &'a Database,
    txn: u64,
    writes: Vec<(RecordId, Vec<u8>)>,
    log: &'a mut Vec<(u64, EventKind)>,
}

impl Access for Unlocked<'_> {
    fn read(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.log.push((self.txn, EventKind::Read(id)));
        Ok(self.db.read_into(id, buf)?)
    }

    fn read_for_update(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        self.read(id, buf)
    }

    fn write(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.writes.push((id, payload.to_vec()));
        Ok(())
    }

    fn read_unlocked(&mut self, id: RecordId, buf: &mut [u8]) -> Result<(), TxnAbort> {
        Ok(self.db.read_into(id, buf)?)
    }

    fn insert(&mut self, id: RecordId, payload: &[u8]) -> Result<(), TxnAbort> {
        self.write(id, payload)
    }

    fn record_size(&self, table: TableId) -> usize {
        self.db.record_size(table)
    }
}

#[test]
fn engine_that_skips_a_lock_is_caught() {
    let db = load_accounts(4, 64, 1).unwrap();
    let txns = [TransferTxn { from: 0, to: 1, amount: 100 }, TransferTxn { from: 2, to: 1, amount: 50 }];
    let mut log: Vec<(u64, EventKind)> = vec![(1, EventKind::Begin), (2, EventKind::Begin)];
    // both read account 1 before either writes it
    let mut pending = Vec::new();
    for (i, t) in txns.iter().enumerate() {
        let mut ctx = Unlocked { db: &db, txn: i as u64 + 1, writes: Vec::new(), log: &mut log };
        t.execute(&mut ctx).unwrap();
        pending.push(ctx.writes);
    }
    for (i, writes) in pending.into_iter().enumerate() {
        for (id, bytes) in writes {
            log.push((i as u64 + 1, EventKind::Write(id)));
            db.write(id, &bytes).unwrap();
        }
        log.push((i as u64 + 1, EventKind::Commit));
    }
    assert_eq!(db.table(ACCOUNTS).unwrap().len(), 4);
    assert!(!conservation_check(&db, total_balance, 4 * INITIAL_BALANCE as i128));
    assert!(!check_conflict_serializability(&History::from_ops(log)).is_serializable());
}
