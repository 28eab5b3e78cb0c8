use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::Workload;
use crate::error::StorageError;
use crate::storage::{get_i64, put_i64, Database, RecordId, TableConfig, TableId};
use crate::txn::{Access, AccessEstimate, LockMode, Procedure, TxnAbort, TxnClass};

pub const ACCOUNTS: TableId = TableId(0);
pub const INITIAL_BALANCE: i64 = 1000;

/// Moves `amount` from one account to another if the source can cover it.
#[derive(Debug, Clone)]
pub struct TransferTxn {
    pub from: u64,
    pub to: u64,
    pub amount: i64,
}

impl Procedure for TransferTxn {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        let size = ctx.record_size(ACCOUNTS);
        let (mut a, mut b) = (vec![0u8; size], vec![0u8; size]);
        let (from, to) = (RecordId::new(ACCOUNTS, self.from), RecordId::new(ACCOUNTS, self.to));
        ctx.read_for_update(from, &mut a)?;
        ctx.read_for_update(to, &mut b)?;
        if get_i64(&a, 0) >= self.amount {
            let (from_bal, to_bal) = (get_i64(&a, 0), get_i64(&b, 0));
            put_i64(&mut a, 0, from_bal - self.amount);
            put_i64(&mut b, 0, to_bal + self.amount);
            ctx.write(from, &a)?;
            ctx.write(to, &b)?;
        }
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        Some(AccessEstimate::from_entries(
            [
                (RecordId::new(ACCOUNTS, self.from), LockMode::Exclusive),
                (RecordId::new(ACCOUNTS, self.to), LockMode::Exclusive),
            ],
            true,
        ))
    }

    fn class(&self) -> TxnClass {
        TxnClass::Transfer
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransferWorkload {
    pub accounts: u64,
    pub max_amount: i64,
}

impl TransferWorkload {
    pub fn gen_txn(&self, rng: &mut ChaCha8Rng) -> TransferTxn {
        let from = rng.gen_range(0..self.accounts);
        let mut to = rng.gen_range(0..self.accounts - 1);
        if to >= from {
            to += 1;
        }
        TransferTxn { from, to, amount: rng.gen_range(1..=self.max_amount) }
    }
}

impl Workload for TransferWorkload {
    fn name(&self) -> &'static str {
        "transfer"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, _worker: usize) -> Arc<dyn Procedure> {
        Arc::new(self.gen_txn(rng))
    }
}

/// `accounts` records, each starting with [`INITIAL_BALANCE`] in word 0.
pub fn load_accounts(accounts: u64, record_size: usize, seed: u64) -> Result<Database, StorageError> {
    let mut db = Database::new(seed);
    db.create_table(TableConfig::new(accounts as usize, record_size))?;
    let mut buf = vec![0u8; record_size];
    for k in 0..accounts {
        let id = RecordId::new(ACCOUNTS, k);
        db.read_into(id, &mut buf)?;
        put_i64(&mut buf, 0, INITIAL_BALANCE);
        db.write(id, &buf)?;
    }
    Ok(db)
}

/// Sum of all balances.
pub fn total_balance(db: &Database) -> i128 {
    let t = db.table(ACCOUNTS).expect("accounts table");
    let mut buf = vec![0u8; t.record_size()];
    t.keys()
        .into_iter()
        .map(|k| {
            t.read_into(k, &mut buf).expect("listed key");
            get_i64(&buf, 0) as i128
        })
        .sum()
}
