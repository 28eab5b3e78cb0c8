use crate::error::StorageError;
use crate::storage::{Database, RecordId};

/// Before-images of in-place writes, restored newest-first on abort.
/// Buffers are reused across transactions.
#[derive(Debug, Default)]
pub struct UndoLog {
    entries: Vec<(RecordId, usize, usize)>,
    bytes: Vec<u8>,
}

impl UndoLog {
    pub fn capture(&mut self, id: RecordId, before: &[u8]) {
        let start = self.bytes.len();
        self.bytes.extend_from_slice(before);
        self.entries.push((id, start, before.len()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rollback(&mut self, db: &Database) -> Result<(), StorageError> {
        for &(id, start, len) in self.entries.iter().rev() {
            db.write(id, &self.bytes[start..start + len])?;
        }
        self.clear();
        Ok(())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.bytes.clear();
    }
}
