//! NewOrder and Payment over the standard TPC-C schema.
//!
//! Keys pack the warehouse id into bits 48 and up and the district id into
//! bits 40..48, so partitioning by warehouse is a shift:
//!
//! | table        | key                                   |
//! |--------------|---------------------------------------|
//! | warehouse    | `w << 48`                             |
//! | district     | `w << 48 \| d << 40`                  |
//! | customer     | `w << 48 \| d << 40 \| c`             |
//! | name index   | `w << 48 \| d << 40 \| last_name`     |
//! | item         | `i`                                   |
//! | stock        | `w << 48 \| i`                        |
//! | order        | `w << 48 \| d << 40 \| (o mod 1024)`  |
//! | new-order    | same as order                         |
//! | order-line   | `w << 48 \| d << 40 \| (o mod 1024) << 4 \| ol` |
//! | history      | `w << 48 \| d << 40 \| (h mod 1024)`  |
//!
//! Order, new-order, order-line and history rows live in fixed rings of
//! 1024 per district and are overwritten in place under the district lock.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::Workload;
use crate::error::{ConfigError, StorageError};
use crate::storage::{get_i64, get_u64, put_i64, put_u64, Database, PartitionMap, RecordId, TableConfig, TableId};
use crate::txn::{Access, AccessEstimate, LockMode, Procedure, TxnAbort, TxnClass};

pub const WAREHOUSE: TableId = TableId(0);
pub const DISTRICT: TableId = TableId(1);
pub const CUSTOMER: TableId = TableId(2);
pub const CUSTOMER_NAME: TableId = TableId(3);
pub const ITEM: TableId = TableId(4);
pub const STOCK: TableId = TableId(5);
pub const ORDER: TableId = TableId(6);
pub const NEW_ORDER: TableId = TableId(7);
pub const ORDER_LINE: TableId = TableId(8);
pub const HISTORY: TableId = TableId(9);

pub const DISTRICTS: u64 = 10;
pub const CUSTOMERS: u64 = 3000;
pub const ITEMS: u64 = 100_000;
pub const NAMES: u64 = 1000;
pub const RING: u64 = 1024;

const C_LAST: u64 = 157;
const C_ID: u64 = 259;
const C_ITEM: u64 = 7911;

#[inline]
pub fn wkey(w: u64) -> u64 {
    w << 48
}

#[inline]
pub fn dkey(w: u64, d: u64) -> u64 {
    (w << 48) | (d << 40)
}

#[inline]
pub fn ckey(w: u64, d: u64, c: u64) -> u64 {
    dkey(w, d) | c
}

#[inline]
pub fn skey(w: u64, i: u64) -> u64 {
    (w << 48) | i
}

fn nurand(rng: &mut ChaCha8Rng, a: u64, x: u64, y: u64, c: u64) -> u64 {
    (((rng.gen_range(0..=a) | rng.gen_range(x..=y)) + c) % (y - x + 1)) + x
}

#[derive(Debug, Clone, Copy)]
pub struct TpccConfig {
    pub warehouses: u64,
    pub neworder_pct: u32,
    pub remote_neworder_pct: u32,
    pub remote_payment_pct: u32,
    pub payment_by_name_pct: u32,
}

impl Default for TpccConfig {
    fn default() -> Self {
        TpccConfig {
            warehouses: 4,
            neworder_pct: 50,
            remote_neworder_pct: 10,
            remote_payment_pct: 15,
            payment_by_name_pct: 60,
        }
    }
}

impl TpccConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.warehouses < 1 {
            return Err(ConfigError::invalid("TPC-C needs at least one warehouse"));
        }
        if self.warehouses >= 1 << 15 {
            return Err(ConfigError::invalid("too many warehouses"));
        }
        for p in [self.neworder_pct, self.remote_neworder_pct, self.remote_payment_pct, self.payment_by_name_pct] {
            if p > 100 {
                return Err(ConfigError::invalid("percentages must be <= 100"));
            }
        }
        Ok(())
    }
}

/// Loads every table for `warehouses` warehouses (ids `1..=W`).
pub fn load(cfg: &TpccConfig, seed: u64, split: Option<PartitionMap>) -> Result<Database, StorageError> {
    let w_ids: Vec<u64> = (1..=cfg.warehouses).collect();
    let mut db = Database::new(seed);
    let table = |size: usize| {
        let c = TableConfig::new(0, size);
        match split {
            Some(m) => c.split(m),
            None => c,
        }
    };
    let per_district = |f: &dyn Fn(u64, u64) -> Vec<u64>| -> Vec<u64> {
        w_ids.iter().flat_map(|&w| (1..=DISTRICTS).flat_map(move |d| f(w, d))).collect()
    };
    db.create_table_with_keys(table(64), &w_ids.iter().map(|&w| wkey(w)).collect::<Vec<_>>())?;
    db.create_table_with_keys(table(64), &per_district(&|w, d| vec![dkey(w, d)]))?;
    db.create_table_with_keys(table(96), &per_district(&|w, d| (1..=CUSTOMERS).map(|c| ckey(w, d, c)).collect()))?;
    db.create_table_with_keys(table(16), &per_district(&|w, d| (0..NAMES).map(|n| dkey(w, d) | n).collect()))?;
    // items are never locked, so a global index serves every split mode
    db.create_table_with_keys(TableConfig::new(0, 32), &(1..=ITEMS).collect::<Vec<_>>())?;
    db.create_table_with_keys(
        table(64),
        &w_ids.iter().flat_map(|&w| (1..=ITEMS).map(move |i| skey(w, i))).collect::<Vec<_>>(),
    )?;
    let ring = per_district(&|w, d| (0..RING).map(|o| dkey(w, d) | o).collect());
    db.create_table_with_keys(table(32), &ring)?;
    db.create_table_with_keys(table(8), &ring)?;
    db.create_table_with_keys(
        table(48),
        &per_district(&|w, d| (0..RING).flat_map(|o| (1..=15).map(move |ol| dkey(w, d) | (o << 4) | ol)).collect()),
    )?;
    db.create_table_with_keys(table(48), &ring)?;

    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut buf = vec![0u8; 96];
    let mut put = |db: &Database, id: RecordId, fields: &[(usize, u64)]| -> Result<(), StorageError> {
        let b = &mut buf[..db.record_size(id.table)];
        db.read_into(id, b)?;
        for &(i, v) in fields {
            put_u64(b, i * 8, v);
        }
        db.write(id, b)
    };
    for i in 1..=ITEMS {
        put(&db, RecordId::new(ITEM, i), &[(0, rng.gen_range(100..=10_000))])?;
    }
    for &w in &w_ids {
        put(&db, RecordId::new(WAREHOUSE, wkey(w)), &[(0, 30_000_000), (1, rng.gen_range(0..=2000))])?;
        for i in 1..=ITEMS {
            put(&db, RecordId::new(STOCK, skey(w, i)), &[(0, rng.gen_range(10..=100)), (1, 0), (2, 0), (3, 0)])?;
        }
        for d in 1..=DISTRICTS {
            put(
                &db,
                RecordId::new(DISTRICT, dkey(w, d)),
                &[(0, 3_000_000), (1, rng.gen_range(0..=2000)), (2, CUSTOMERS + 1), (3, 0)],
            )?;
            let mut by_name: Vec<Vec<u64>> = vec![Vec::new(); NAMES as usize];
            for c in 1..=CUSTOMERS {
                let last = if c <= NAMES { c - 1 } else { nurand(&mut rng, 255, 0, NAMES - 1, C_LAST) };
                by_name[last as usize].push(c);
                let balance = (-1000i64) as u64;
                put(
                    &db,
                    RecordId::new(CUSTOMER, ckey(w, d, c)),
                    &[(0, balance), (1, 1000), (2, 1), (3, rng.gen_range(0..=5000)), (4, last), (5, 0)],
                )?;
            }
            for (n, ids) in by_name.iter().enumerate() {
                // ids are ascending; TPC-C takes the middle (rounded up) one
                let middle = ids[(ids.len() - 1) / 2];
                put(&db, RecordId::new(CUSTOMER_NAME, dkey(w, d) | n as u64), &[(0, ids.len() as u64), (1, middle)])?;
            }
        }
    }
    Ok(db)
}

#[derive(Debug, Clone)]
pub struct NewOrderTxn {
    pub w: u64,
    pub d: u64,
    pub c: u64,
    /// (item, supplying warehouse, quantity)
    pub lines: Vec<(u64, u64, u64)>,
}

impl Procedure for NewOrderTxn {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        let mut b = [0u8; 96];
        ctx.read(RecordId::new(WAREHOUSE, wkey(self.w)), &mut b[..64])?;
        let w_tax = get_u64(&b, 8);
        let did = RecordId::new(DISTRICT, dkey(self.w, self.d));
        ctx.read_for_update(did, &mut b[..64])?;
        let o_id = get_u64(&b, 16);
        let d_tax = get_u64(&b, 8);
        put_u64(&mut b, 16, o_id + 1);
        ctx.write(did, &b[..64])?;
        ctx.read(RecordId::new(CUSTOMER, ckey(self.w, self.d, self.c)), &mut b[..96])?;
        let discount = get_u64(&b, 24);

        let slot = o_id % RING;
        let mut all_local = 1;
        let mut total = 0u64;
        for (n, &(i, sw, qty)) in self.lines.iter().enumerate() {
            ctx.read_unlocked(RecordId::new(ITEM, i), &mut b[..32])?;
            let price = get_u64(&b, 0);
            let sid = RecordId::new(STOCK, skey(sw, i));
            ctx.read_for_update(sid, &mut b[..64])?;
            let q = get_u64(&b, 0);
            put_u64(&mut b, 0, if q >= qty + 10 { q - qty } else { q + 91 - qty });
            let v = get_u64(&b, 8) + qty;
            put_u64(&mut b, 8, v);
            let v = get_u64(&b, 16) + 1;
            put_u64(&mut b, 16, v);
            if sw != self.w {
                let v = get_u64(&b, 24) + 1;
                put_u64(&mut b, 24, v);
                all_local = 0;
            }
            ctx.write(sid, &b[..64])?;
            let amount = qty * price;
            total += amount;
            let mut ol = [0u8; 48];
            put_u64(&mut ol, 0, i);
            put_u64(&mut ol, 8, sw);
            put_u64(&mut ol, 16, qty);
            put_u64(&mut ol, 24, amount);
            put_u64(&mut ol, 32, o_id);
            ctx.insert(RecordId::new(ORDER_LINE, dkey(self.w, self.d) | (slot << 4) | (n as u64 + 1)), &ol)?;
        }
        let mut o = [0u8; 32];
        put_u64(&mut o, 0, self.c);
        put_u64(&mut o, 8, self.lines.len() as u64);
        put_u64(&mut o, 16, all_local);
        put_u64(&mut o, 24, o_id);
        ctx.insert(RecordId::new(ORDER, dkey(self.w, self.d) | slot), &o)?;
        ctx.insert(RecordId::new(NEW_ORDER, dkey(self.w, self.d) | slot), &o_id.to_le_bytes())?;
        std::hint::black_box(total * (10_000 - discount) * (10_000 + w_tax + d_tax));
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        let mut e = AccessEstimate::new(true);
        e.insert(RecordId::new(WAREHOUSE, wkey(self.w)), LockMode::Shared);
        e.insert(RecordId::new(DISTRICT, dkey(self.w, self.d)), LockMode::Exclusive);
        e.insert(RecordId::new(CUSTOMER, ckey(self.w, self.d, self.c)), LockMode::Shared);
        for &(i, sw, _) in &self.lines {
            e.insert(RecordId::new(STOCK, skey(sw, i)), LockMode::Exclusive);
        }
        Some(e)
    }

    fn class(&self) -> TxnClass {
        TxnClass::NewOrder
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CustomerSel {
    Id(u64),
    LastName(u64),
}

#[derive(Debug, Clone)]
pub struct PaymentTxn {
    pub w: u64,
    pub d: u64,
    pub c_w: u64,
    pub c_d: u64,
    pub customer: CustomerSel,
    pub amount: u64,
}

impl PaymentTxn {
    fn customer_id(&self, ctx: &mut dyn Access) -> Result<u64, TxnAbort> {
        match self.customer {
            CustomerSel::Id(c) => Ok(c),
            CustomerSel::LastName(n) => {
                let mut b = [0u8; 16];
                ctx.read_unlocked(RecordId::new(CUSTOMER_NAME, dkey(self.c_w, self.c_d) | n), &mut b)?;
                Ok(get_u64(&b, 8))
            }
        }
    }
}

impl Procedure for PaymentTxn {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        let mut b = [0u8; 96];
        let wid = RecordId::new(WAREHOUSE, wkey(self.w));
        ctx.read_for_update(wid, &mut b[..64])?;
        let v = get_u64(&b, 0) + self.amount;
        put_u64(&mut b, 0, v);
        ctx.write(wid, &b[..64])?;
        let did = RecordId::new(DISTRICT, dkey(self.w, self.d));
        ctx.read_for_update(did, &mut b[..64])?;
        let v = get_u64(&b, 0) + self.amount;
        put_u64(&mut b, 0, v);
        let h = get_u64(&b, 24);
        put_u64(&mut b, 24, h + 1);
        ctx.write(did, &b[..64])?;

        let c = self.customer_id(ctx)?;
        let cid = RecordId::new(CUSTOMER, ckey(self.c_w, self.c_d, c));
        ctx.read_for_update(cid, &mut b[..96])?;
        let v = get_i64(&b, 0) - self.amount as i64;
        put_i64(&mut b, 0, v);
        let v = get_u64(&b, 8) + self.amount;
        put_u64(&mut b, 8, v);
        let v = get_u64(&b, 16) + 1;
        put_u64(&mut b, 16, v);
        ctx.write(cid, &b[..96])?;

        let mut hist = [0u8; 48];
        put_u64(&mut hist, 0, cid.key);
        put_u64(&mut hist, 8, self.amount);
        put_u64(&mut hist, 16, self.w);
        put_u64(&mut hist, 24, self.d);
        ctx.insert(RecordId::new(HISTORY, dkey(self.w, self.d) | (h % RING)), &hist)?;
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        let CustomerSel::Id(c) = self.customer else { return None };
        Some(AccessEstimate::from_entries(
            [
                (RecordId::new(WAREHOUSE, wkey(self.w)), LockMode::Exclusive),
                (RecordId::new(DISTRICT, dkey(self.w, self.d)), LockMode::Exclusive),
                (RecordId::new(CUSTOMER, ckey(self.c_w, self.c_d, c)), LockMode::Exclusive),
            ],
            true,
        ))
    }

    fn class(&self) -> TxnClass {
        TxnClass::Payment
    }
}

/// NewOrder/Payment mix. Worker `i` uses warehouse `i mod W + 1` as home.
#[derive(Debug, Clone)]
pub struct TpccWorkload {
    cfg: TpccConfig,
}

impl TpccWorkload {
    pub fn new(cfg: TpccConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(TpccWorkload { cfg })
    }

    pub fn config(&self) -> &TpccConfig {
        &self.cfg
    }

    fn other_warehouse(&self, rng: &mut ChaCha8Rng, w: u64) -> u64 {
        let o = rng.gen_range(1..self.cfg.warehouses);
        if o >= w {
            o + 1
        } else {
            o
        }
    }

    pub fn gen_neworder(&self, rng: &mut ChaCha8Rng, w: u64) -> NewOrderTxn {
        let d = rng.gen_range(1..=DISTRICTS);
        let c = nurand(rng, 1023, 1, CUSTOMERS, C_ID);
        let n = rng.gen_range(5..=15);
        let mut lines: Vec<(u64, u64, u64)> = Vec::with_capacity(n);
        while lines.len() < n {
            let i = nurand(rng, 8191, 1, ITEMS, C_ITEM);
            if lines.iter().all(|l| l.0 != i) {
                lines.push((i, w, rng.gen_range(1..=10)));
            }
        }
        if self.cfg.warehouses > 1 && rng.gen_range(0..100) < self.cfg.remote_neworder_pct {
            let l = rng.gen_range(0..n);
            lines[l].1 = self.other_warehouse(rng, w);
        }
        NewOrderTxn { w, d, c, lines }
    }

    pub fn gen_payment(&self, rng: &mut ChaCha8Rng, w: u64) -> PaymentTxn {
        let d = rng.gen_range(1..=DISTRICTS);
        let (c_w, c_d) = if self.cfg.warehouses > 1 && rng.gen_range(0..100) < self.cfg.remote_payment_pct {
            (self.other_warehouse(rng, w), rng.gen_range(1..=DISTRICTS))
        } else {
            (w, d)
        };
        let customer = if rng.gen_range(0..100) < self.cfg.payment_by_name_pct {
            CustomerSel::LastName(nurand(rng, 255, 0, NAMES - 1, C_LAST))
        } else {
            CustomerSel::Id(nurand(rng, 1023, 1, CUSTOMERS, C_ID))
        };
        PaymentTxn { w, d, c_w, c_d, customer, amount: rng.gen_range(100..=500_000) }
    }

    pub fn home(&self, worker: usize) -> u64 {
        worker as u64 % self.cfg.warehouses + 1
    }
}

impl Workload for TpccWorkload {
    fn name(&self) -> &'static str {
        "tpcc"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, worker: usize) -> Arc<dyn Procedure> {
        let w = self.home(worker);
        if rng.gen_range(0..100) < self.cfg.neworder_pct {
            Arc::new(self.gen_neworder(rng, w))
        } else {
            Arc::new(self.gen_payment(rng, w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txn::{SerialAccess, Transaction, TxnId};
    use rand::SeedableRng;

    fn small() -> (TpccWorkload, Database) {
        let cfg = TpccConfig { warehouses: 2, ..Default::default() };
        (TpccWorkload::new(cfg).unwrap(), load(&cfg, 3, None).unwrap())
    }

    #[test]
    fn key_layout() {
        assert_eq!(PartitionMap::new(16, crate::storage::PartitionScheme::Warehouse)
            .partition_of(RecordId::new(CUSTOMER, ckey(18, 3, 77))), 2);
        assert_eq!(ckey(1, 2, 3) >> 48, 1);
        assert_eq!((ckey(1, 2, 3) >> 40) & 0xff, 2);
    }

    #[test]
    fn payment_selection() {
        let (w, db) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut saw_remote = false;
        for _ in 0..2000 {
            let p = w.gen_payment(&mut rng, 1);
            match p.customer {
                CustomerSel::Id(_) => assert!(p.footprint().unwrap().is_exact()),
                CustomerSel::LastName(_) => {
                    let t = Transaction::new(TxnId(1), Arc::new(p.clone())).unwrap();
                    assert!(t.needs_reconnaissance());
                }
            }
            if p.c_w != p.w {
                saw_remote = true;
                assert_eq!(p.w, 1);
            }
        }
        assert!(saw_remote);
        let p = PaymentTxn { w: 1, d: 1, c_w: 1, c_d: 1, customer: CustomerSel::LastName(0), amount: 5 };
        p.execute(&mut SerialAccess::new(&db)).unwrap();
        // name 0 belongs to customer 1 plus any NURand duplicates; all ids >= 1
        let b = db.read(RecordId::new(CUSTOMER_NAME, dkey(1, 1))).unwrap().payload;
        assert!(get_u64(&b, 0) >= 1 && get_u64(&b, 8) >= 1);
    }

    #[test]
    fn local_neworder_stays_home() {
        let cfg = TpccConfig { warehouses: 3, remote_neworder_pct: 0, ..Default::default() };
        let w = TpccWorkload::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = w.gen_neworder(&mut rng, 2);
            let fp = t.footprint().unwrap();
            assert!(fp.entries().iter().all(|e| e.0.table == ITEM || e.0.key >> 48 == 2));
            assert_eq!(fp.len(), 3 + t.lines.len());
        }
    }

    #[test]
    fn neworder_advances_district() {
        let (w, db) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = w.gen_neworder(&mut rng, 1);
        let did = RecordId::new(DISTRICT, dkey(1, t.d));
        let before = get_u64(&db.read(did).unwrap().payload, 16);
        t.execute(&mut SerialAccess::new(&db)).unwrap();
        assert_eq!(get_u64(&db.read(did).unwrap().payload, 16), before + 1);
        let o = db.read(RecordId::new(ORDER, dkey(1, t.d) | (before % RING))).unwrap().payload;
        assert_eq!(get_u64(&o, 24), before);
    }

    #[test]
    fn zero_warehouses() {
        assert!(TpccWorkload::new(TpccConfig { warehouses: 0, ..Default::default() }).is_err());
    }
}
