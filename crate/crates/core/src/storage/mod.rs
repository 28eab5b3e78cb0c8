//! Fixed-size in-memory record store with a hash index.
//!
//! A table is either indexed globally (one index shared by every thread) or
//! split per worker, in which case both the index and the record slab of
//! each partition are separate allocations selected by a [`PartitionMap`].
//!
//! Payloads are stored as 64-bit words with relaxed atomic access. Storage
//! performs no synchronization of its own: the engine on top guarantees that
//! a writer holds exclusive access.

mod partition;

pub use partition::{splitmix64, PartitionMap, PartitionScheme, WAREHOUSE_SHIFT};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam_utils::CachePadded;
use rustc_hash::FxHashMap;

use crate::error::StorageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TableId(pub u16);

/// Identity of a record. The derived order (table, then key) is the global
/// lock order used by deadlock-free acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId {
    pub table: TableId,
    pub key: u64,
}

impl RecordId {
    pub const fn new(table: TableId, key: u64) -> Self {
        RecordId { table, key }
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.table.0, self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: RecordId,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Global,
    Split(PartitionMap),
}

#[derive(Debug, Clone, Copy)]
pub struct TableConfig {
    pub record_count: usize,
    pub record_size: usize,
    pub index_mode: IndexMode,
    /// Count index lookups per partition. Off by default; the counters are
    /// shared cache lines in global mode.
    pub track_lookups: bool,
}

impl TableConfig {
    pub fn new(record_count: usize, record_size: usize) -> Self {
        TableConfig {
            record_count,
            record_size,
            index_mode: IndexMode::Global,
            track_lookups: false,
        }
    }

    pub fn split(mut self, map: PartitionMap) -> Self {
        self.index_mode = IndexMode::Split(map);
        self
    }

    pub fn tracked(mut self) -> Self {
        self.track_lookups = true;
        self
    }

    fn validate(&self) -> Result<(), StorageError> {
        if self.record_count == 0 {
            return Err(StorageError::InvalidConfig("record_count must be >= 1".into()));
        }
        if self.record_size < 8 {
            return Err(StorageError::InvalidConfig("record_size must be >= 8".into()));
        }
        Ok(())
    }
}

struct Part {
    index: FxHashMap<u64, u32>,
    keys: Vec<u64>,
    data: Box<[AtomicU64]>,
    lookups: CachePadded<AtomicU64>,
}

pub struct Table {
    id: TableId,
    record_size: usize,
    words: usize,
    split: Option<PartitionMap>,
    track: bool,
    parts: Vec<Part>,
}

impl Table {
    /// Creates a table holding keys `0..record_count`.
    pub fn create(id: TableId, config: TableConfig, seed: u64) -> Result<Table, StorageError> {
        let keys: Vec<u64> = (0..config.record_count as u64).collect();
        Self::create_with_keys(id, config, &keys, seed)
    }

    /// Creates a table over an explicit (possibly sparse) key set.
    /// `config.record_count` is ignored in favor of `keys.len()`.
    pub fn create_with_keys(
        id: TableId,
        mut config: TableConfig,
        keys: &[u64],
        seed: u64,
    ) -> Result<Table, StorageError> {
        config.record_count = keys.len();
        config.validate()?;
        let words = config.record_size.div_ceil(8);
        let (nparts, split) = match config.index_mode {
            IndexMode::Global => (1, None),
            IndexMode::Split(map) => (map.partitions(), Some(map)),
        };
        let mut part_keys: Vec<Vec<u64>> = vec![Vec::new(); nparts];
        for &k in keys {
            let p = split.map_or(0, |m| m.partition_of(RecordId::new(id, k)));
            part_keys[p].push(k);
        }
        let mut parts = Vec::with_capacity(nparts);
        for pk in part_keys {
            let total = pk
                .len()
                .checked_mul(words)
                .ok_or(StorageError::Capacity { records: keys.len(), bytes: config.record_size })?;
            let mut data: Vec<AtomicU64> = Vec::new();
            data.try_reserve_exact(total).map_err(|_| StorageError::Capacity {
                records: keys.len(),
                bytes: config.record_size,
            })?;
            let mut index = FxHashMap::default();
            index.reserve(pk.len());
            for (slot, &k) in pk.iter().enumerate() {
                if index.insert(k, slot as u32).is_some() {
                    return Err(StorageError::InvalidConfig(format!("duplicate key {k}")));
                }
                let base = seed ^ splitmix64(((id.0 as u64) << 48) ^ k);
                for w in 0..words {
                    data.push(AtomicU64::new(splitmix64(base.wrapping_add(w as u64))));
                }
            }
            parts.push(Part {
                index,
                keys: pk,
                data: data.into_boxed_slice(),
                lookups: CachePadded::new(AtomicU64::new(0)),
            });
        }
        Ok(Table { id, record_size: config.record_size, words, split, track: config.track_lookups, parts })
    }

    pub fn id(&self) -> TableId {
        self.id
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.keys.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition_map(&self) -> Option<PartitionMap> {
        self.split
    }

    /// Lookups served by each index partition since creation (only counted
    /// when the table was created with `track_lookups`).
    pub fn lookup_counts(&self) -> Vec<u64> {
        self.parts.iter().map(|p| p.lookups.load(Ordering::Relaxed)).collect()
    }

    #[inline]
    fn locate(&self, key: u64) -> Result<&[AtomicU64], StorageError> {
        let p = match self.split {
            None => 0,
            Some(map) => map.partition_of(RecordId::new(self.id, key)),
        };
        let part = &self.parts[p];
        if self.track {
            part.lookups.fetch_add(1, Ordering::Relaxed);
        }
        match part.index.get(&key) {
            Some(&slot) => {
                let base = slot as usize * self.words;
                Ok(&part.data[base..base + self.words])
            }
            None => Err(StorageError::NotFound(RecordId::new(self.id, key))),
        }
    }

    pub fn contains(&self, key: u64) -> bool {
        let p = self.split.map_or(0, |m| m.partition_of(RecordId::new(self.id, key)));
        self.parts[p].index.contains_key(&key)
    }

    pub fn read_into(&self, key: u64, buf: &mut [u8]) -> Result<(), StorageError> {
        if buf.len() != self.record_size {
            return Err(StorageError::SizeMismatch { expected: self.record_size, got: buf.len() });
        }
        let words = self.locate(key)?;
        for (chunk, w) in buf.chunks_mut(8).zip(words) {
            let bytes = w.load(Ordering::Relaxed).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
        Ok(())
    }

    pub fn write(&self, key: u64, payload: &[u8]) -> Result<(), StorageError> {
        if payload.len() != self.record_size {
            return Err(StorageError::SizeMismatch { expected: self.record_size, got: payload.len() });
        }
        let words = self.locate(key)?;
        for (chunk, w) in payload.chunks(8).zip(words) {
            let mut bytes = [0u8; 8];
            bytes[..chunk.len()].copy_from_slice(chunk);
            w.store(u64::from_le_bytes(bytes), Ordering::Relaxed);
        }
        Ok(())
    }

    /// All keys in ascending order.
    pub fn keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.parts.iter().flat_map(|p| p.keys.iter().copied()).collect();
        keys.sort_unstable();
        keys
    }
}

/// A set of tables addressed by [`TableId`] (the table's position).
pub struct Database {
    tables: Vec<Table>,
    seed: u64,
}

impl Database {
    pub fn new(seed: u64) -> Self {
        Database { tables: Vec::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn create_table(&mut self, config: TableConfig) -> Result<TableId, StorageError> {
        let id = TableId(self.tables.len() as u16);
        self.tables.push(Table::create(id, config, self.seed)?);
        Ok(id)
    }

    pub fn create_table_with_keys(
        &mut self,
        config: TableConfig,
        keys: &[u64],
    ) -> Result<TableId, StorageError> {
        let id = TableId(self.tables.len() as u16);
        self.tables.push(Table::create_with_keys(id, config, keys, self.seed)?);
        Ok(id)
    }

    pub fn table(&self, id: TableId) -> Result<&Table, StorageError> {
        self.tables.get(id.0 as usize).ok_or(StorageError::UnknownTable(id.0))
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn record_size(&self, table: TableId) -> usize {
        self.tables[table.0 as usize].record_size
    }

    pub fn read(&self, id: RecordId) -> Result<Record, StorageError> {
        let table = self.table(id.table)?;
        let mut payload = vec![0u8; table.record_size];
        table.read_into(id.key, &mut payload)?;
        Ok(Record { id, payload })
    }

    #[inline]
    pub fn read_into(&self, id: RecordId, buf: &mut [u8]) -> Result<(), StorageError> {
        self.table(id.table)?.read_into(id.key, buf)
    }

    #[inline]
    pub fn write(&self, id: RecordId, payload: &[u8]) -> Result<(), StorageError> {
        self.table(id.table)?.write(id.key, payload)
    }

    /// Every record of every table, concatenated in (table, key) order.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for t in &self.tables {
            let mut buf = vec![0u8; t.record_size];
            for k in t.keys() {
                t.read_into(k, &mut buf).expect("key listed by table");
                out.extend_from_slice(&buf);
            }
        }
        out
    }
}

/// Little-endian u64 field helpers over record payloads.
pub fn get_u64(buf: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(buf[offset..offset + 8].try_into().unwrap())
}

pub fn put_u64(buf: &mut [u8], offset: usize, v: u64) {
    buf[offset..offset + 8].copy_from_slice(&v.to_le_bytes());
}

pub fn get_i64(buf: &[u8], offset: usize) -> i64 {
    get_u64(buf, offset) as i64
}

pub fn put_i64(buf: &mut [u8], offset: usize, v: i64) {
    put_u64(buf, offset, v as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: TableId = TableId(0);

    #[test]
    fn create_minimal_table() {
        let mut db = Database::new(1);
        let t = db.create_table(TableConfig::new(1, 8)).unwrap();
        assert_eq!(db.table(t).unwrap().len(), 1);
        assert!(db.read(RecordId::new(t, 0)).is_ok());
        assert!(db.read(RecordId::new(t, 1)).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut db = Database::new(1);
        assert!(db.create_table(TableConfig::new(0, 64)).is_err());
        assert!(db.create_table(TableConfig::new(4, 7)).is_err());
    }

    #[test]
    fn split_spreads_uniformly() {
        let mut db = Database::new(1);
        let t = db
            .create_table(TableConfig::new(64, 1000).split(PartitionMap::modulo(4)).tracked())
            .unwrap();
        let table = db.table(t).unwrap();
        assert_eq!(table.parts.len(), 4);
        for p in &table.parts {
            assert_eq!(p.keys.len(), 16);
        }
        // lookups for keys of partition 2 touch only partition 2's index
        for k in (2..64).step_by(4) {
            db.read(RecordId::new(t, k)).unwrap();
        }
        assert_eq!(table.lookup_counts(), vec![0, 0, 16, 0]);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let build = |seed| {
            let mut db = Database::new(seed);
            db.create_table(TableConfig::new(100, 100)).unwrap();
            db.create_table(TableConfig::new(10, 24).split(PartitionMap::modulo(3))).unwrap();
            db.snapshot()
        };
        assert_eq!(build(7), build(7));
        assert_ne!(build(7), build(8));
        let mut a = Database::new(5);
        a.create_table(TableConfig::new(10, 16)).unwrap();
        let r1 = a.read(RecordId::new(T0, 5)).unwrap();
        let r2 = a.read(RecordId::new(T0, 5)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn write_then_read_and_last_write_wins() {
        let mut db = Database::new(3);
        let t = db.create_table(TableConfig::new(10, 12)).unwrap();
        let id = RecordId::new(t, 4);
        db.write(id, &[1u8; 12]).unwrap();
        assert_eq!(db.read(id).unwrap().payload, vec![1u8; 12]);
        db.write(id, &[9u8; 12]).unwrap();
        assert_eq!(db.read(id).unwrap().payload, vec![9u8; 12]);
    }

    #[test]
    fn write_errors() {
        let mut db = Database::new(3);
        let t = db.create_table(TableConfig::new(10, 16)).unwrap();
        assert_eq!(
            db.write(RecordId::new(t, 1), &[0u8; 15]),
            Err(StorageError::SizeMismatch { expected: 16, got: 15 })
        );
        assert_eq!(
            db.write(RecordId::new(t, 10), &[0u8; 16]),
            Err(StorageError::NotFound(RecordId::new(t, 10)))
        );
    }

    #[test]
    fn sparse_keys() {
        let mut db = Database::new(3);
        let t = db.create_table_with_keys(TableConfig::new(0, 8), &[5, 1 << 50, 99]).unwrap();
        assert_eq!(db.table(t).unwrap().keys(), vec![5, 99, 1 << 50]);
        assert!(db.read(RecordId::new(t, 6)).is_err());
    }

    #[test]
    fn record_order_is_table_then_key() {
        let a = RecordId::new(TableId(0), 100);
        let b = RecordId::new(TableId(1), 1);
        assert!(a < b);
        assert!(RecordId::new(TableId(1), 1) < RecordId::new(TableId(1), 2));
    }
}
