//! Order sources and the telemetry sink.
//!
//! Every order source implements [`Mode`]. The main controller holds its
//! modes as a ring of trait objects and never learns which concrete source
//! it is polling.

pub mod rc;
pub mod serial;

use std::fmt;

use thiserror::Error;

use crate::kernel::SimTime;
use crate::messages::Order;

pub use rc::{RcBuffers, RcChannel, RcChannelBuffer, RcError, RcInterpretation, RcMode, RcPinCommand, StandardRc};
pub use serial::{
    ByteSink, ByteSource, FrameReplay, LinkState, MemoryStream, PcMode, SerialLink, SerialWriter, SharedLink,
};

/// Identifier a mode records when it delivers an order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId(pub u8);

impl ModeId {
    pub const RC: ModeId = ModeId(0);
    pub const PC: ModeId = ModeId(1);
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Main-controller data a mode may update while reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MainData {
    mode_id: Option<ModeId>,
    reads: u64,
}

impl MainData {
    pub fn save_mode_id(&mut self, id: ModeId) {
        self.mode_id = Some(id);
        self.reads += 1;
    }

    /// Id saved by the most recent successful read.
    pub fn mode_id(&self) -> Option<ModeId> {
        self.mode_id
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IoError {
    #[error("read with no pending message")]
    EmptyRead,
    #[error("writing telemetry: {0}")]
    Sink(String),
}

/// A reading mode.
pub trait Mode: Send {
    fn id(&self) -> ModeId;
    /// Polls the source; true iff an order is ready to be read.
    fn new_message(&mut self, now: SimTime) -> bool;
    /// Takes the pending order and records this mode's id in `data`.
    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError>;
}

impl<M: Mode + ?Sized> Mode for Box<M> {
    fn id(&self) -> ModeId {
        (**self).id()
    }
    fn new_message(&mut self, now: SimTime) -> bool {
        (**self).new_message(now)
    }
    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
        (**self).read(data)
    }
}

/// Read extension: counts polls, hits and reads of the wrapped mode.
#[derive(Debug, Clone)]
pub struct CountingMode<M> {
    inner: M,
    pub polls: u64,
    pub hits: u64,
    pub reads: u64,
}

impl<M: Mode> CountingMode<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            polls: 0,
            hits: 0,
            reads: 0,
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: Mode> Mode for CountingMode<M> {
    fn id(&self) -> ModeId {
        self.inner.id()
    }
    fn new_message(&mut self, now: SimTime) -> bool {
        self.polls += 1;
        let hit = self.inner.new_message(now);
        self.hits += hit as u64;
        hit
    }
    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
        let r = self.inner.read(data);
        self.reads += r.is_ok() as u64;
        r
    }
}

/// Read extension: rejects orders that fail range validation, turning them
/// into "no message".
#[derive(Debug, Clone)]
pub struct ValidatingMode<M> {
    inner: M,
    held: Option<Order>,
    pub rejected: u64,
}

impl<M: Mode> ValidatingMode<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            held: None,
            rejected: 0,
        }
    }
}

impl<M: Mode> Mode for ValidatingMode<M> {
    fn id(&self) -> ModeId {
        self.inner.id()
    }
    fn new_message(&mut self, now: SimTime) -> bool {
        if self.held.is_some() {
            return true;
        }
        if !self.inner.new_message(now) {
            return false;
        }
        let mut scratch = MainData::default();
        match self.inner.read(&mut scratch) {
            Ok(o) if o.validate().is_ok() => {
                self.held = Some(o);
                true
            }
            Ok(_) => {
                self.rejected += 1;
                false
            }
            Err(_) => false,
        }
    }
    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
        let o = self.held.take().ok_or(IoError::EmptyRead)?;
        data.save_mode_id(self.inner.id());
        Ok(o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::Source;

    struct Scripted(Vec<Order>);

    impl Mode for Scripted {
        fn id(&self) -> ModeId {
            ModeId(9)
        }
        fn new_message(&mut self, _now: SimTime) -> bool {
            !self.0.is_empty()
        }
        fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
            let o = self.0.pop().ok_or(IoError::EmptyRead)?;
            data.save_mode_id(self.id());
            Ok(o)
        }
    }

    #[test]
    fn counting_is_transparent() {
        let o = Order::velocity([1.0; 4], 0.0, Source::Pc);
        let mut m = CountingMode::new(Scripted(vec![o]));
        let mut d = MainData::default();
        assert!(m.new_message(SimTime::ZERO));
        assert_eq!(m.read(&mut d), Ok(o));
        assert!(!m.new_message(SimTime::ZERO));
        assert_eq!(m.read(&mut d), Err(IoError::EmptyRead));
        assert_eq!((m.polls, m.hits, m.reads), (2, 1, 1));
        assert_eq!(d.mode_id(), Some(ModeId(9)));
    }

    #[test]
    fn validating_drops_out_of_range() {
        let bad = Order::velocity([1000.0; 4], 0.0, Source::Pc);
        let good = Order::velocity([10.0; 4], 0.0, Source::Pc);
        let mut m = ValidatingMode::new(Scripted(vec![good, bad]));
        let mut d = MainData::default();
        assert!(!m.new_message(SimTime::ZERO));
        assert_eq!(m.rejected, 1);
        assert!(m.new_message(SimTime::ZERO));
        assert_eq!(m.read(&mut d), Ok(good));
        assert_eq!(d.reads(), 1);
    }
}
