use std::collections::VecDeque;

use rtrb::{Consumer, Producer, PushError, RingBuffer};

pub const QUEUE_CAPACITY: usize = 1024;

struct Envelope<T> {
    seq: u64,
    msg: T,
}

/// Producer end of an SPSC queue. Messages that do not fit are parked in a
/// local overflow list and retried on [`Outbox::flush`], so a send never
/// blocks and nothing is dropped.
pub struct Outbox<T> {
    tx: Producer<Envelope<T>>,
    seq: u64,
    overflow: VecDeque<Envelope<T>>,
}

/// Consumer end. Checks that sequence numbers arrive gapless and in order.
pub struct Inbox<T> {
    rx: Consumer<Envelope<T>>,
    expect: u64,
}

pub fn channel<T>(capacity: usize) -> (Outbox<T>, Inbox<T>) {
    let (tx, rx) = RingBuffer::new(capacity);
    (Outbox { tx, seq: 0, overflow: VecDeque::new() }, Inbox { rx, expect: 0 })
}

impl<T> Outbox<T> {
    pub fn send(&mut self, msg: T) {
        let env = Envelope { seq: self.seq, msg };
        self.seq += 1;
        if !self.overflow.is_empty() {
            self.overflow.push_back(env);
            return;
        }
        if let Err(PushError::Full(env)) = self.tx.push(env) {
            self.overflow.push_back(env);
        }
    }

    /// Moves parked messages into the ring. Returns true if any moved.
    pub fn flush(&mut self) -> bool {
        let mut moved = false;
        while let Some(env) = self.overflow.pop_front() {
            match self.tx.push(env) {
                Ok(()) => moved = true,
                Err(PushError::Full(env)) => {
                    self.overflow.push_front(env);
                    break;
                }
            }
        }
        moved
    }

    pub fn parked(&self) -> usize {
        self.overflow.len()
    }

    pub fn sent(&self) -> u64 {
        self.seq
    }
}

impl<T> Inbox<T> {
    #[inline]
    pub fn recv(&mut self) -> Option<T> {
        let env = self.rx.pop().ok()?;
        assert_eq!(env.seq, self.expect, "queue sequence gap");
        self.expect += 1;
        Some(env.msg)
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn received(&self) -> u64 {
        self.expect
    }
}
