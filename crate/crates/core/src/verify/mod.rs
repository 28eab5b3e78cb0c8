//! Correctness oracles: conflict-serializability of recorded histories,
//! serial replay, and conservation checks.

mod history;

pub use history::{Event, EventKind, EventLog, History, HistoryRecorder};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use crate::error::StorageError;
use crate::storage::{Database, RecordId};
use crate::txn::{Procedure, SerialAccess, TxnAbort, TxnId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Serializability {
    /// An equivalent serial order of the committed transactions.
    Serializable(Vec<TxnId>),
    /// Transactions forming a cycle in the conflict graph, in edge order.
    Cycle(Vec<TxnId>),
}

impl Serializability {
    pub fn is_serializable(&self) -> bool {
        matches!(self, Serializability::Serializable(_))
    }
}

struct Committed {
    txn: TxnId,
    first_seq: u64,
    ops: Vec<(u64, RecordId, bool)>,
}

fn committed_attempts(h: &History) -> Vec<Committed> {
    let mut open: HashMap<TxnId, Committed> = HashMap::new();
    let mut done = Vec::new();
    for e in h.events() {
        match e.kind {
            EventKind::Begin => {
                open.insert(e.txn, Committed { txn: e.txn, first_seq: e.seq, ops: Vec::new() });
            }
            EventKind::Abort => {
                open.remove(&e.txn);
            }
            EventKind::Commit => {
                if let Some(c) = open.remove(&e.txn) {
                    done.push(c);
                }
            }
            EventKind::Read(id) | EventKind::Write(id) => {
                let is_write = matches!(e.kind, EventKind::Write(_));
                open.entry(e.txn)
                    .or_insert_with(|| Committed { txn: e.txn, first_seq: e.seq, ops: Vec::new() })
                    .ops
                    .push((e.seq, id, is_write));
            }
        }
    }
    done
}

/// Builds the conflict graph of the committed transactions (WR, WW and RW
/// edges per key) and returns a topological order or a cycle.
pub fn check_conflict_serializability(h: &History) -> Serializability {
    let txns = committed_attempts(h);
    let n = txns.len();
    let mut ops: Vec<(u64, usize, RecordId, bool)> = Vec::new();
    for (node, t) in txns.iter().enumerate() {
        ops.extend(t.ops.iter().map(|&(seq, id, w)| (seq, node, id, w)));
    }
    ops.sort_by_key(|o| o.0);

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    // Per key: last writer and readers since that write. Edges to earlier
    // accesses are implied transitively through the last writer.
    let mut state: HashMap<RecordId, (Option<usize>, Vec<usize>)> = HashMap::new();
    for &(_, node, id, is_write) in &ops {
        let (last_writer, readers) = state.entry(id).or_default();
        if let Some(w) = *last_writer {
            if w != node {
                adj[w].push(node);
            }
        }
        if is_write {
            for &r in readers.iter() {
                if r != node {
                    adj[r].push(node);
                }
            }
            readers.clear();
            *last_writer = Some(node);
        } else {
            readers.push(node);
        }
    }
    for edges in &mut adj {
        edges.sort_unstable();
        edges.dedup();
    }

    let mut indeg = vec![0usize; n];
    for edges in &adj {
        for &v in edges {
            indeg[v] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<(u64, usize)>> = (0..n)
        .filter(|&v| indeg[v] == 0)
        .map(|v| Reverse((txns[v].first_seq, v)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, v))) = ready.pop() {
        order.push(v);
        for &u in &adj[v] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(Reverse((txns[u].first_seq, u)));
            }
        }
    }
    if order.len() == n {
        return Serializability::Serializable(order.into_iter().map(|v| txns[v].txn).collect());
    }
    let cycle = find_cycle(&adj, &indeg).expect("unsorted nodes imply a cycle");
    Serializability::Cycle(cycle.into_iter().map(|v| txns[v].txn).collect())
}

fn find_cycle(adj: &[Vec<usize>], indeg: &[usize]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; adj.len()];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    for start in (0..adj.len()).filter(|&v| indeg[v] > 0) {
        if color[start] != 0 {
            continue;
        }
        stack.push((start, 0));
        path.push(start);
        color[start] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&u) = adj[v].get(*next) {
                *next += 1;
                match color[u] {
                    0 => {
                        color[u] = 1;
                        stack.push((u, 0));
                        path.push(u);
                    }
                    1 => {
                        let pos = path.iter().position(|&p| p == u).unwrap();
                        return Some(path[pos..].to_vec());
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

/// Executes `txns` one at a time in `order` against `db` and returns the
/// resulting snapshot.
pub fn serial_oracle(
    db: &Database,
    txns: &[Arc<dyn Procedure>],
    order: &[usize],
) -> Result<Vec<u8>, StorageError> {
    for &i in order {
        let mut ctx = SerialAccess::new(db);
        match txns[i].execute(&mut ctx) {
            Ok(()) => {}
            Err(TxnAbort::Storage(e)) => return Err(e),
            Err(other) => unreachable!("serial execution cannot abort with {other:?}"),
        }
    }
    Ok(db.snapshot())
}

/// Passes iff the conserved quantity still equals its expected value.
pub fn conservation_check(db: &Database, measure: impl Fn(&Database) -> i128, expected: i128) -> bool {
    measure(db) == expected
}
