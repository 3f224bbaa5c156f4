//! PC serial link: byte streams, connection state, reader mode and writer.

use std::collections::VecDeque;
use std::io;
use std::sync::Arc;

use parking_lot::Mutex;

use super::{IoError, MainData, Mode, ModeId};
use crate::kernel::SimTime;
use crate::messages::{encode_message, FrameDecoder, Message, Order, Telemetry, FLAG};

/// Non-blocking byte input.
pub trait ByteSource: Send {
    /// Appends whatever is available to `buf`; returns the number of bytes added.
    fn read_available(&mut self, buf: &mut Vec<u8>) -> io::Result<usize>;
}

pub trait ByteSink: Send {
    fn write_bytes(&mut self, bytes: &[u8]) -> io::Result<()>;
}

#[derive(Debug, Default)]
struct StreamInner {
    data: VecDeque<u8>,
    closed: bool,
}

/// In-memory byte pipe; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemoryStream {
    inner: Arc<Mutex<StreamInner>>,
}

impl MemoryStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, bytes: &[u8]) {
        self.inner.lock().data.extend(bytes);
    }

    pub fn drain_all(&self) -> Vec<u8> {
        self.inner.lock().data.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Makes subsequent writes fail.
    pub fn close(&self) {
        self.inner.lock().closed = true;
    }
}

impl ByteSource for MemoryStream {
    fn read_available(&mut self, buf: &mut Vec<u8>) -> io::Result<usize> {
        let mut inner = self.inner.lock();
        let n = inner.data.len();
        buf.extend(inner.data.drain(..));
        Ok(n)
    }
}

impl ByteSink for MemoryStream {
    fn write_bytes(&mut self, bytes: &[u8]) -> io::Result<()> {
        let mut inner = self.inner.lock();
        if inner.closed {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "stream closed"));
        }
        inner.data.extend(bytes);
        Ok(())
    }
}

impl<W: io::Write + Send> ByteSink for io::BufWriter<W> {
    fn write_bytes(&mut self, bytes: &[u8]) -> io::Result<()> {
        io::Write::write_all(self, bytes)
    }
}

/// Replays a recorded byte stream one frame per poll. Since a raw flag byte
/// only ever starts a frame, the recording is split before each flag.
#[derive(Debug, Clone)]
pub struct FrameReplay {
    chunks: VecDeque<Vec<u8>>,
}

impl FrameReplay {
    pub fn new(bytes: &[u8]) -> Self {
        let mut chunks = VecDeque::new();
        let mut cur = Vec::new();
        for &b in bytes {
            if b == FLAG && !cur.is_empty() {
                chunks.push_back(std::mem::take(&mut cur));
            }
            cur.push(b);
        }
        if !cur.is_empty() {
            chunks.push_back(cur);
        }
        Self { chunks }
    }

    pub fn remaining(&self) -> usize {
        self.chunks.len()
    }
}

impl ByteSource for FrameReplay {
    fn read_available(&mut self, buf: &mut Vec<u8>) -> io::Result<usize> {
        Ok(match self.chunks.pop_front() {
            Some(c) => {
                buf.extend_from_slice(&c);
                c.len()
            }
            None => 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Disconnected,
    Syncing,
    Connected,
}

/// Connection state of the PC link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SerialLink {
    state: LinkState,
    failures: u32,
    threshold: u32,
}

impl SerialLink {
    pub fn new(threshold: u32) -> Self {
        assert!(threshold > 0);
        Self {
            state: LinkState::Disconnected,
            failures: 0,
            threshold,
        }
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    /// Consecutive invalid frames.
    pub fn failures(&self) -> u32 {
        self.failures
    }

    pub fn on_valid(&mut self) {
        self.failures = 0;
        self.state = LinkState::Connected;
    }

    pub fn on_invalid(&mut self) {
        self.failures += 1;
        if self.state == LinkState::Connected || self.failures >= self.threshold {
            self.state = LinkState::Syncing;
        }
    }
}

pub type SharedLink = Arc<Mutex<SerialLink>>;

/// PC reading mode: drains the byte source through the frame decoder.
pub struct PcMode {
    source: Box<dyn ByteSource>,
    decoder: FrameDecoder,
    link: SharedLink,
    pending: Option<Order>,
    buf: Vec<u8>,
    pub frames_ok: u64,
    pub frames_bad: u64,
    pub superseded: u64,
}

impl PcMode {
    pub fn new(source: Box<dyn ByteSource>, link: SharedLink) -> Self {
        Self {
            source,
            decoder: FrameDecoder::new(),
            link,
            pending: None,
            buf: Vec::new(),
            frames_ok: 0,
            frames_bad: 0,
            superseded: 0,
        }
    }

    pub fn link(&self) -> SharedLink {
        self.link.clone()
    }
}

impl Mode for PcMode {
    fn id(&self) -> ModeId {
        ModeId::PC
    }

    fn new_message(&mut self, _now: SimTime) -> bool {
        self.buf.clear();
        if let Err(e) = self.source.read_available(&mut self.buf) {
            log::warn!("serial read failed: {e}");
        }
        for &b in &self.buf {
            match self.decoder.feed(b) {
                None => {}
                Some(Ok(Message::Order(o))) => {
                    self.link.lock().on_valid();
                    self.frames_ok += 1;
                    if self.pending.replace(o).is_some() {
                        self.superseded += 1;
                    }
                }
                Some(Ok(Message::Telemetry(_))) => {
                    // Well-formed but not addressed to us.
                    self.link.lock().on_valid();
                    self.frames_ok += 1;
                }
                Some(Err(e)) => {
                    log::debug!("dropping frame: {e}");
                    self.link.lock().on_invalid();
                    self.frames_bad += 1;
                }
            }
        }
        self.pending.is_some()
    }

    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
        let o = self.pending.take().ok_or(IoError::EmptyRead)?;
        data.save_mode_id(ModeId::PC);
        Ok(o)
    }
}

/// Telemetry writer. Frames are held back while the link is disconnected.
pub struct SerialWriter {
    sink: Box<dyn ByteSink>,
    link: SharedLink,
    backlog: VecDeque<Vec<u8>>,
    capacity: usize,
    pub dropped: u64,
    pub written: u64,
}

impl SerialWriter {
    pub fn new(sink: Box<dyn ByteSink>, link: SharedLink, capacity: usize) -> Self {
        Self {
            sink,
            link,
            backlog: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
            written: 0,
        }
    }

    pub fn backlog(&self) -> usize {
        self.backlog.len()
    }

    pub fn write(&mut self, t: &Telemetry) -> Result<(), IoError> {
        let frame = encode_message(&Message::Telemetry(*t)).map_err(|e| IoError::Sink(e.to_string()))?;
        if self.link.lock().state() == LinkState::Disconnected {
            if self.backlog.len() == self.capacity {
                self.backlog.pop_front();
                self.dropped += 1;
            }
            self.backlog.push_back(frame);
            return Ok(());
        }
        while let Some(old) = self.backlog.front() {
            self.sink.write_bytes(old).map_err(|e| IoError::Sink(e.to_string()))?;
            self.backlog.pop_front();
            self.written += 1;
        }
        self.sink
            .write_bytes(&frame)
            .map_err(|e| IoError::Sink(e.to_string()))?;
        self.written += 1;
        Ok(())
    }
}
