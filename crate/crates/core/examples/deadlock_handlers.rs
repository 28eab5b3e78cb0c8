//! Two transactions lock two records in opposite orders. Each policy
//! resolves the cycle differently; deadlock-free ordering never forms it.

use contention_lab::lockmgr::{ordered_lockset, AcquireOutcome, DeadlockPolicy, LockManager, WaitStatus};
use contention_lab::storage::{RecordId, TableId};
use contention_lab::txn::{AccessEstimate, LockMode, Timestamp, TxnId};

fn main() {
    let a = RecordId::new(TableId(0), 1);
    let b = RecordId::new(TableId(0), 2);
    for policy in [DeadlockPolicy::WaitFor, DeadlockPolicy::WaitDie, DeadlockPolicy::Dreadlocks] {
        let lm = LockManager::new(policy, 2, 16);
        let mut t1 = lm.txn_locks(0);
        let mut t2 = lm.txn_locks(1);
        lm.begin(&mut t1, TxnId(1), Timestamp::new(1, 0));
        lm.begin(&mut t2, TxnId(2), Timestamp::new(2, 0));
        lm.acquire(&mut t1, a, LockMode::Exclusive).unwrap();
        lm.acquire(&mut t2, b, LockMode::Exclusive).unwrap();
        let first = lm.acquire(&mut t1, b, LockMode::Exclusive).unwrap();
        let mut second = lm.acquire(&mut t2, a, LockMode::Exclusive).unwrap();
        if second == AcquireOutcome::MustWait && lm.poll(&mut t2) == WaitStatus::Deadlock {
            second = AcquireOutcome::AbortDeadlock;
        }
        println!("{:<16} T1 on b: {first:?}, T2 on a: {second:?}", policy.name());
        lm.release_all(&mut t2);
        println!("{:<16} T1 after T2 gives up: {:?}", "", lm.poll(&mut t1));
        lm.release_all(&mut t1);
    }
    let t1 = AccessEstimate::from_entries([(b, LockMode::Exclusive), (a, LockMode::Exclusive)], true);
    let t2 = AccessEstimate::from_entries([(a, LockMode::Exclusive), (b, LockMode::Exclusive)], true);
    println!("2pl-deadlockfree  both lock in order {:?} / {:?}", ordered_lockset(&t1), ordered_lockset(&t2));
}
