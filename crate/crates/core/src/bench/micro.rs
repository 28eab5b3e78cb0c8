use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::Workload;
use crate::error::ConfigError;
use crate::storage::{get_u64, put_u64, splitmix64, RecordId, TableId};
use crate::txn::{Access, AccessEstimate, LockMode, Procedure, TxnAbort, TxnClass};

pub const MICRO_TABLE: TableId = TableId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    ReadOnly,
    Rmw,
}

impl OpKind {
    pub fn mode(self) -> LockMode {
        match self {
            OpKind::ReadOnly => LockMode::Shared,
            OpKind::Rmw => LockMode::Exclusive,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MicroConfig {
    pub table_size: u64,
    pub record_size: usize,
    pub ops_per_txn: usize,
    /// Keys `0..hot_set_size` are hot; 0 disables the hot set.
    pub hot_set_size: u64,
    pub hot_ops_per_txn: usize,
    pub op_kind: OpKind,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig {
            table_size: 1_000_000,
            record_size: 1000,
            ops_per_txn: 10,
            hot_set_size: 64,
            hot_ops_per_txn: 2,
            op_kind: OpKind::Rmw,
        }
    }
}

impl MicroConfig {
    pub fn hot_ops(&self) -> usize {
        if self.hot_set_size == 0 {
            0
        } else {
            self.hot_ops_per_txn
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ops_per_txn == 0 {
            return Err(ConfigError::invalid("ops_per_txn must be >= 1"));
        }
        if self.hot_ops() > self.ops_per_txn {
            return Err(ConfigError::invalid("hot_ops exceeds ops_per_txn"));
        }
        if self.hot_set_size > 0 && self.hot_set_size < self.hot_ops_per_txn as u64 {
            return Err(ConfigError::invalid(format!(
                "hot set of {} cannot supply {} distinct hot keys",
                self.hot_set_size, self.hot_ops_per_txn
            )));
        }
        if self.hot_set_size > self.table_size {
            return Err(ConfigError::invalid("hot set larger than the table"));
        }
        let cold = self.ops_per_txn - self.hot_ops();
        if self.table_size - self.hot_set_size < cold as u64 {
            return Err(ConfigError::invalid("not enough cold records for distinct keys"));
        }
        if self.record_size < 16 {
            return Err(ConfigError::invalid("record_size must be >= 16"));
        }
        Ok(())
    }
}

/// Ten-ish key read-only or read-modify-write transaction. An RMW bumps
/// word 0 and rehashes word 1 with the salt, so replay order matters.
#[derive(Debug, Clone)]
pub struct MicroTxn {
    pub keys: Vec<u64>,
    pub op: OpKind,
    pub salt: u64,
}

impl Procedure for MicroTxn {
    fn execute(&self, ctx: &mut dyn Access) -> Result<(), TxnAbort> {
        let mut buf = vec![0u8; ctx.record_size(MICRO_TABLE)];
        let mut sum = 0u64;
        for &k in &self.keys {
            let id = RecordId::new(MICRO_TABLE, k);
            match self.op {
                OpKind::ReadOnly => {
                    ctx.read(id, &mut buf)?;
                    sum = sum.wrapping_add(get_u64(&buf, 0));
                }
                OpKind::Rmw => {
                    ctx.read_for_update(id, &mut buf)?;
                    let v = get_u64(&buf, 0).wrapping_add(1);
                    put_u64(&mut buf, 0, v);
                    let v = splitmix64(get_u64(&buf, 8) ^ self.salt);
                    put_u64(&mut buf, 8, v);
                    ctx.write(id, &buf)?;
                }
            }
        }
        std::hint::black_box(sum);
        Ok(())
    }

    fn footprint(&self) -> Option<AccessEstimate> {
        let mode = self.op.mode();
        Some(AccessEstimate::from_entries(self.keys.iter().map(|&k| (RecordId::new(MICRO_TABLE, k), mode)), true))
    }

    fn class(&self) -> TxnClass {
        TxnClass::Micro
    }
}

/// Draws `n` keys uniformly from `lo..hi`, distinct from each other and
/// from `taken`.
pub(crate) fn draw_distinct(rng: &mut ChaCha8Rng, lo: u64, hi: u64, n: usize, out: &mut Vec<u64>) {
    let start = out.len();
    while out.len() < start + n {
        let k = rng.gen_range(lo..hi);
        if !out.contains(&k) {
            out.push(k);
        }
    }
}

/// Hot/cold microbenchmark generator.
#[derive(Debug, Clone)]
pub struct MicroWorkload {
    cfg: MicroConfig,
}

impl MicroWorkload {
    pub fn new(cfg: MicroConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(MicroWorkload { cfg })
    }

    pub fn config(&self) -> &MicroConfig {
        &self.cfg
    }

    /// Keys in request order: hot keys first, then cold.
    pub fn gen_txn(&self, rng: &mut ChaCha8Rng) -> MicroTxn {
        let c = &self.cfg;
        let hot = c.hot_ops();
        let mut keys = Vec::with_capacity(c.ops_per_txn);
        draw_distinct(rng, 0, c.hot_set_size, hot, &mut keys);
        draw_distinct(rng, c.hot_set_size, c.table_size, c.ops_per_txn - hot, &mut keys);
        MicroTxn { keys, op: c.op_kind, salt: rng.gen() }
    }
}

impl Workload for MicroWorkload {
    fn name(&self) -> &'static str {
        match self.cfg.op_kind {
            OpKind::ReadOnly => "micro-readonly",
            OpKind::Rmw => "micro-rmw",
        }
    }

    fn generate(&self, rng: &mut ChaCha8Rng, _worker: usize) -> Arc<dyn Procedure> {
        Arc::new(self.gen_txn(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg(hot: u64, hot_ops: usize, op: OpKind) -> MicroConfig {
        MicroConfig {
            table_size: 10_000_000,
            hot_set_size: hot,
            hot_ops_per_txn: hot_ops,
            op_kind: op,
            ..MicroConfig::default()
        }
    }

    #[test]
    fn hot_then_cold() {
        let w = MicroWorkload::new(cfg(64, 2, OpKind::Rmw)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let t = w.gen_txn(&mut rng);
            assert_eq!(t.keys.len(), 10);
            assert!(t.keys[..2].iter().all(|&k| k < 64));
            assert!(t.keys[2..].iter().all(|&k| (64..10_000_000).contains(&k)));
            let mut s = t.keys.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 10);
            let fp = t.footprint().unwrap();
            assert!(fp.is_exact());
            assert!(fp.entries().iter().all(|e| e.1 == LockMode::Exclusive));
        }
    }

    #[test]
    fn uniform_read_only() {
        let w = MicroWorkload::new(cfg(0, 2, OpKind::ReadOnly)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = w.gen_txn(&mut rng);
        assert_eq!(t.keys.len(), 10);
        assert!(t.footprint().unwrap().entries().iter().all(|e| e.1 == LockMode::Shared));
    }

    #[test]
    fn single_key() {
        let c = MicroConfig { ops_per_txn: 1, hot_ops_per_txn: 0, ..cfg(64, 0, OpKind::Rmw) };
        let w = MicroWorkload::new(c).unwrap();
        let t = w.gen_txn(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(t.keys.len(), 1);
        assert!(t.keys[0] >= 64);
    }

    #[test]
    fn config_errors() {
        assert!(MicroWorkload::new(cfg(1, 2, OpKind::Rmw)).is_err());
        assert!(MicroWorkload::new(MicroConfig { table_size: 70, ..cfg(64, 2, OpKind::Rmw) }).is_err());
        assert!(MicroWorkload::new(cfg(2, 2, OpKind::Rmw)).is_ok());
    }
}
