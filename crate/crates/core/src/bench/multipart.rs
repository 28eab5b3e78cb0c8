use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::micro::{MicroTxn, OpKind};
use crate::engine::Workload;
use crate::error::ConfigError;
use crate::storage::PartitionMap;
use crate::txn::Procedure;

#[derive(Debug, Clone, Copy)]
pub struct MultipartConfig {
    pub table_size: u64,
    pub record_size: usize,
    pub ops_per_txn: usize,
    /// Logical data partitions; record `k` belongs to `k mod partitions`.
    pub partitions: usize,
    pub parts_per_txn: usize,
    /// When set, a transaction spans two partitions with this percentage
    /// and one otherwise; `parts_per_txn` is ignored.
    pub mp_pct: Option<u32>,
    pub op_kind: OpKind,
}

impl Default for MultipartConfig {
    fn default() -> Self {
        MultipartConfig {
            table_size: 1_000_000,
            record_size: 1000,
            ops_per_txn: 10,
            partitions: 8,
            parts_per_txn: 1,
            mp_pct: None,
            op_kind: OpKind::Rmw,
        }
    }
}

impl MultipartConfig {
    pub fn partition_map(&self) -> PartitionMap {
        PartitionMap::modulo(self.partitions)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.partitions == 0 {
            return Err(ConfigError::invalid("partitions must be >= 1"));
        }
        let widest = match self.mp_pct {
            Some(p) if p > 100 => return Err(ConfigError::invalid("mp_pct must be <= 100")),
            Some(0) => 1,
            Some(_) => 2,
            None => self.parts_per_txn,
        };
        if widest == 0 {
            return Err(ConfigError::invalid("parts_per_txn must be >= 1"));
        }
        if widest > self.partitions {
            return Err(ConfigError::invalid(format!(
                "cannot spread over {widest} partitions with only {}",
                self.partitions
            )));
        }
        if widest > self.ops_per_txn {
            return Err(ConfigError::invalid("more partitions per transaction than operations"));
        }
        let per_part = self.table_size / self.partitions as u64;
        if per_part < self.ops_per_txn as u64 {
            return Err(ConfigError::invalid("partitions too small for distinct keys"));
        }
        Ok(())
    }
}

/// Uniform RMW (or read-only) transactions over a chosen number of
/// partitions. The first partition is the generating worker's home.
#[derive(Debug, Clone)]
pub struct MultipartWorkload {
    cfg: MultipartConfig,
}

impl MultipartWorkload {
    pub fn new(cfg: MultipartConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(MultipartWorkload { cfg })
    }

    pub fn config(&self) -> &MultipartConfig {
        &self.cfg
    }

    pub fn gen_txn(&self, rng: &mut ChaCha8Rng, worker: usize) -> MicroTxn {
        let c = &self.cfg;
        let n = c.partitions as u64;
        let spread = match c.mp_pct {
            Some(p) => {
                if rng.gen_range(0..100) < p {
                    2
                } else {
                    1
                }
            }
            None => c.parts_per_txn,
        };
        let mut parts = vec![(worker % c.partitions) as u64];
        while parts.len() < spread {
            let p = rng.gen_range(0..n);
            if !parts.contains(&p) {
                parts.push(p);
            }
        }
        let rows = c.table_size / n;
        let mut keys = Vec::with_capacity(c.ops_per_txn);
        while keys.len() < c.ops_per_txn {
            let p = parts[keys.len() % spread];
            let k = p + n * rng.gen_range(0..rows);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        MicroTxn { keys, op: c.op_kind, salt: rng.gen() }
    }
}

impl Workload for MultipartWorkload {
    fn name(&self) -> &'static str {
        "multipart"
    }

    fn generate(&self, rng: &mut ChaCha8Rng, worker: usize) -> Arc<dyn Procedure> {
        Arc::new(self.gen_txn(rng, worker))
    }
}
