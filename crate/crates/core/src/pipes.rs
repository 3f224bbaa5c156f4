//! Latest-value connectors between a measurement source and its sinks.
//!
//! A pipe has exactly one writer and any number of readers. Neither end
//! knows what is on the other side, so a sensor stack can be swapped for a
//! scripted source without the controller noticing.

use std::sync::Arc;

use parking_lot::Mutex;

use crate::kernel::SimTime;

/// Snapshot of a pipe's single slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeSlot<T> {
    pub value: T,
    /// Number of writes so far; 0 before the first write.
    pub seq: u64,
    pub written_at: SimTime,
}

/// Result of [`PipeReader::read_latest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading<T> {
    pub value: T,
    pub seq: u64,
    /// True iff the slot was written since this reader's previous read.
    pub fresh: bool,
}

type Slot<T> = Arc<Mutex<PipeSlot<T>>>;

/// Creates a connected writer/reader pair.
pub fn pipe<T: Copy + Default>() -> (PipeWriter<T>, PipeReader<T>) {
    let slot = Arc::new(Mutex::new(PipeSlot {
        value: T::default(),
        seq: 0,
        written_at: SimTime::ZERO,
    }));
    (PipeWriter { slot: slot.clone() }, PipeReader { slot, last_seq: 0 })
}

/// The single producing end. Not `Clone`.
#[derive(Debug)]
pub struct PipeWriter<T> {
    slot: Slot<T>,
}

impl<T: Copy> PipeWriter<T> {
    pub fn write(&self, value: T, at: SimTime) {
        let mut slot = self.slot.lock();
        slot.value = value;
        slot.seq += 1;
        slot.written_at = at;
    }

    /// A new reader with its own freshness tracking.
    pub fn subscribe(&self) -> PipeReader<T> {
        PipeReader {
            slot: self.slot.clone(),
            last_seq: 0,
        }
    }
}

/// A consuming end; each reader tracks freshness independently.
#[derive(Debug, Clone)]
pub struct PipeReader<T> {
    slot: Slot<T>,
    last_seq: u64,
}

impl<T: Copy> PipeReader<T> {
    pub fn read_latest(&mut self) -> Reading<T> {
        let snap = *self.slot.lock();
        let fresh = snap.seq > self.last_seq;
        self.last_seq = snap.seq;
        Reading {
            value: snap.value,
            seq: snap.seq,
            fresh,
        }
    }

    /// Full slot contents without touching freshness.
    pub fn peek(&self) -> PipeSlot<T> {
        *self.slot.lock()
    }
}
