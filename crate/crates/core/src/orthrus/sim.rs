use std::sync::Arc;

use crossbeam_utils::CachePadded;

use super::{CcWorker, ExecWorker, Mesh};
use crate::engine::{Feed, FeedCursor, RunControl};
use crate::metrics::{CounterSnapshot, Phase, PhaseClock, WorkerCounters, WorkerRole};
use crate::storage::{Database, PartitionMap};
use crate::verify::{History, HistoryRecorder};

/// The full engine mesh driven step by step from one thread. Every
/// interleaving is chosen by the caller, so runs are reproducible.
pub struct Sim {
    pub ccs: Vec<CcWorker>,
    pub execs: Vec<ExecWorker>,
    cc_counters: Vec<CachePadded<WorkerCounters>>,
    exec_counters: Vec<CachePadded<WorkerCounters>>,
    control: Arc<RunControl>,
}

impl Sim {
    pub fn new(
        ncc: usize,
        nexec: usize,
        inflight: usize,
        map: PartitionMap,
        db: Arc<Database>,
        feed: Feed,
        recorder: Option<&Arc<HistoryRecorder>>,
    ) -> Self {
        Self::with_capacity(ncc, nexec, inflight, map, db, feed, recorder, super::QUEUE_CAPACITY)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_capacity(
        ncc: usize,
        nexec: usize,
        inflight: usize,
        map: PartitionMap,
        db: Arc<Database>,
        feed: Feed,
        recorder: Option<&Arc<HistoryRecorder>>,
        capacity: usize,
    ) -> Self {
        let mut mesh = Mesh::new(ncc, nexec, capacity);
        let control = RunControl::new(None);
        let mut ccs = Vec::with_capacity(ncc);
        for c in (0..ncc).rev() {
            ccs.push(CcWorker::new(
                c,
                mesh.cc_in_exec.pop().unwrap(),
                mesh.cc_in_peer.pop().unwrap(),
                mesh.cc_out_peer.pop().unwrap(),
                mesh.cc_out_exec.pop().unwrap(),
            ));
        }
        ccs.reverse();
        let mut execs = Vec::with_capacity(nexec);
        for e in (0..nexec).rev() {
            execs.push(ExecWorker::new(
                e,
                inflight,
                map,
                Arc::clone(&db),
                FeedCursor::new(feed.clone(), Arc::clone(&control), e),
                recorder.map(|r| r.log()),
                mesh.exec_out.pop().unwrap(),
                mesh.exec_in.pop().unwrap(),
            ));
        }
        execs.reverse();
        Sim {
            ccs,
            execs,
            cc_counters: (0..ncc).map(|_| WorkerCounters::new(WorkerRole::ConcurrencyControl)).collect(),
            exec_counters: (0..nexec).map(|_| WorkerCounters::new(WorkerRole::Execution)).collect(),
            control,
        }
    }

    pub fn step_cc(&mut self, i: usize) -> bool {
        let mut clock = PhaseClock::new(&self.cc_counters[i], Phase::Idle);
        self.ccs[i].step(&mut clock)
    }

    pub fn step_exec(&mut self, i: usize) -> bool {
        let counters = &self.exec_counters[i];
        let mut clock = PhaseClock::new(counters, Phase::Idle);
        self.execs[i].step(counters, &mut clock)
    }

    pub fn done(&self) -> bool {
        self.execs.iter().all(ExecWorker::finished) && self.ccs.iter().all(CcWorker::drained)
    }

    /// Steps every worker in turn until all are done. Returns the number of
    /// rounds, or `None` if `max_rounds` ran out.
    pub fn run_to_completion(&mut self, max_rounds: usize) -> Option<usize> {
        for round in 0..max_rounds {
            if self.done() {
                return Some(round);
            }
            for e in 0..self.execs.len() {
                self.step_exec(e);
            }
            for c in 0..self.ccs.len() {
                self.step_cc(c);
            }
        }
        self.done().then_some(max_rounds)
    }

    pub fn stop_admission(&self) {
        self.control.stop();
    }

    pub fn exec_totals(&self) -> CounterSnapshot {
        let mut t = CounterSnapshot::default();
        for c in &self.exec_counters {
            t.accumulate(&c.snapshot());
        }
        t
    }

    pub fn audit(&self) -> Result<(), String> {
        self.ccs.iter().try_for_each(CcWorker::audit)
    }

    pub fn into_history(self) -> History {
        History::merge(self.execs.into_iter().map(ExecWorker::into_events))
    }
}
