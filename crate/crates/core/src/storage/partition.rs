use super::RecordId;

/// Bit offset of the warehouse id inside a packed TPC-C key.
pub const WAREHOUSE_SHIFT: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    /// `key mod n`. Used by tests and the multi-partition workload.
    Modulo,
    /// Seeded hash of (table, key), then `mod n`.
    Hash { seed: u64 },
    /// Warehouse id packed in the high bits of the key, then `mod n`.
    Warehouse,
}

/// Total, stable assignment of records to `n` disjoint owners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionMap {
    partitions: usize,
    scheme: PartitionScheme,
}

impl PartitionMap {
    pub fn new(partitions: usize, scheme: PartitionScheme) -> Self {
        assert!(partitions >= 1, "partition map needs at least one partition");
        PartitionMap { partitions, scheme }
    }

    pub fn modulo(partitions: usize) -> Self {
        Self::new(partitions, PartitionScheme::Modulo)
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn scheme(&self) -> PartitionScheme {
        self.scheme
    }

    #[inline]
    pub fn partition_of(&self, id: RecordId) -> usize {
        let n = self.partitions as u64;
        let p = match self.scheme {
            PartitionScheme::Modulo => id.key % n,
            PartitionScheme::Hash { seed } => {
                splitmix64(id.key ^ seed ^ ((id.table.0 as u64) << 56)) % n
            }
            PartitionScheme::Warehouse => (id.key >> WAREHOUSE_SHIFT) % n,
        };
        p as usize
    }
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::TableId;

    fn rid(key: u64) -> RecordId {
        RecordId::new(TableId(0), key)
    }

    #[test]
    fn single_partition_maps_everything_to_zero() {
        let map = PartitionMap::new(1, PartitionScheme::Hash { seed: 9 });
        for k in 0..100 {
            assert_eq!(map.partition_of(rid(k)), 0);
        }
    }

    #[test]
    fn modulo_mode() {
        assert_eq!(PartitionMap::modulo(4).partition_of(rid(7)), 3);
    }

    #[test]
    fn warehouse_mode_folds_modulo() {
        let map = PartitionMap::new(16, PartitionScheme::Warehouse);
        for w in 1..40u64 {
            let id = RecordId::new(TableId(2), (w << WAREHOUSE_SHIFT) | 1234);
            assert_eq!(map.partition_of(id), (w % 16) as usize);
        }
    }

    #[test]
    fn hash_mode_is_deterministic_and_covers_all_partitions() {
        let a = PartitionMap::new(5, PartitionScheme::Hash { seed: 42 });
        let b = PartitionMap::new(5, PartitionScheme::Hash { seed: 42 });
        let mut seen = [0usize; 5];
        for k in 0..10_000 {
            let p = a.partition_of(rid(k));
            assert_eq!(p, b.partition_of(rid(k)));
            seen[p] += 1;
        }
        assert!(seen.iter().all(|&c| c > 1500), "{seen:?}");
    }
}
