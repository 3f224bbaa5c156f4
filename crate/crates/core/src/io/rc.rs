//! RC receiver: pulse-width buffers fed by pin interrupts, and the RC
//! reading mode that turns the two channel widths into an order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use super::{IoError, MainData, Mode, ModeId};
use crate::kernel::{CommandContext, ControlCommand, SimDuration, SimTime};
use crate::messages::{Order, Source, WHEEL_COUNT};

/// Interrupt data word for a rising edge; anything else is a falling edge.
pub const LEVEL_RISE: u32 = 1;
pub const LEVEL_FALL: u32 = 0;

/// Pulse width meaning "centre".
pub const NEUTRAL_WIDTH_US: u32 = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RcChannel {
    Velocity,
    Direction,
}

impl fmt::Display for RcChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RcChannel::Velocity => "velocity",
            RcChannel::Direction => "direction",
        })
    }
}

impl FromStr for RcChannel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "velocity" => Ok(RcChannel::Velocity),
            "direction" => Ok(RcChannel::Direction),
            other => Err(format!("unknown RC channel `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RcError {
    #[error("{channel} pin: edges out of order at {at}")]
    EdgeOrder { channel: RcChannel, at: SimTime },
    #[error("{channel} pin: pulse of {width_us} us rejected")]
    WidthRejected { channel: RcChannel, width_us: u64 },
}

/// Latest accepted pulse of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcChannelBuffer {
    pub channel: RcChannel,
    pub last_rise: Option<SimTime>,
    pub last_width: Option<u32>,
    pub last_update: Option<SimTime>,
    min_width: u32,
    max_width: u32,
}

impl RcChannelBuffer {
    pub fn new(channel: RcChannel, min_width: u32, max_width: u32) -> Self {
        Self {
            channel,
            last_rise: None,
            last_width: None,
            last_update: None,
            min_width,
            max_width,
        }
    }

    fn reset(&mut self) {
        self.last_rise = None;
        self.last_width = None;
        self.last_update = None;
    }

    pub fn on_edge(&mut self, rising: bool, at: SimTime) -> Result<(), RcError> {
        let channel = self.channel;
        match (rising, self.last_rise) {
            (true, None) => {
                self.last_rise = Some(at);
                Ok(())
            }
            (false, Some(rise)) if at >= rise => {
                self.last_rise = None;
                let width_us = (at - rise).as_micros();
                if width_us >= self.min_width as u64 && width_us <= self.max_width as u64 {
                    self.last_width = Some(width_us as u32);
                    self.last_update = Some(at);
                    Ok(())
                } else {
                    Err(RcError::WidthRejected { channel, width_us })
                }
            }
            _ => {
                self.reset();
                Err(RcError::EdgeOrder { channel, at })
            }
        }
    }

    /// Width if updated within `stale` of `now`.
    pub fn fresh_width(&self, now: SimTime, stale: SimDuration) -> Option<u32> {
        let at = self.last_update?;
        (now.saturating_since(at) <= stale).then_some(self.last_width?)
    }
}

/// Both channel buffers, written from pin interrupts and read by the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcBuffers {
    pub velocity: RcChannelBuffer,
    pub direction: RcChannelBuffer,
}

impl RcBuffers {
    pub fn new(min_width: u32, max_width: u32) -> Self {
        Self {
            velocity: RcChannelBuffer::new(RcChannel::Velocity, min_width, max_width),
            direction: RcChannelBuffer::new(RcChannel::Direction, min_width, max_width),
        }
    }

    pub fn channel_mut(&mut self, ch: RcChannel) -> &mut RcChannelBuffer {
        match ch {
            RcChannel::Velocity => &mut self.velocity,
            RcChannel::Direction => &mut self.direction,
        }
    }
}

pub type SharedRcBuffers = Arc<Mutex<RcBuffers>>;

/// Pin interrupt command for one RC channel.
pub struct RcPinCommand {
    buffers: SharedRcBuffers,
    channel: RcChannel,
}

impl RcPinCommand {
    pub fn new(buffers: SharedRcBuffers, channel: RcChannel) -> Self {
        Self { buffers, channel }
    }
}

impl ControlCommand for RcPinCommand {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        let rising = ctx.data() == LEVEL_RISE;
        if let Err(e) = self.buffers.lock().channel_mut(self.channel).on_edge(rising, ctx.now()) {
            log::debug!("{e}");
        }
    }
}

/// Stick deflection in percent from a pulse width.
pub fn width_to_percent(width_us: u32) -> f64 {
    ((width_us as f64 - NEUTRAL_WIDTH_US as f64) / 5.0).clamp(-100.0, 100.0)
}

/// Maps stick deflections to an order; the customisable step of RC reading.
pub trait RcInterpretation: Send {
    fn to_order(&self, velocity_pct: f64, direction_pct: f64) -> Order;
}

/// Velocity stick drives all wheels alike, direction stick steers.
#[derive(Debug, Clone, Copy)]
pub struct StandardRc {
    pub max_rpm: f64,
    pub max_steer: f64,
}

impl Default for StandardRc {
    fn default() -> Self {
        Self {
            max_rpm: 300.0,
            max_steer: 30.0,
        }
    }
}

impl RcInterpretation for StandardRc {
    fn to_order(&self, velocity_pct: f64, direction_pct: f64) -> Order {
        Order::velocity(
            [velocity_pct / 100.0 * self.max_rpm; WHEEL_COUNT],
            direction_pct / 100.0 * self.max_steer,
            Source::Rc,
        )
    }
}

/// RC reading mode. A message is available while both channels are fresh.
pub struct RcMode {
    buffers: SharedRcBuffers,
    stale: SimDuration,
    interpretation: Box<dyn RcInterpretation>,
    ready: Option<(u32, u32)>,
}

impl RcMode {
    pub fn new(buffers: SharedRcBuffers, stale: SimDuration, interpretation: Box<dyn RcInterpretation>) -> Self {
        Self {
            buffers,
            stale,
            interpretation,
            ready: None,
        }
    }

    pub fn buffers(&self) -> SharedRcBuffers {
        self.buffers.clone()
    }
}

impl Mode for RcMode {
    fn id(&self) -> ModeId {
        ModeId::RC
    }

    fn new_message(&mut self, now: SimTime) -> bool {
        let b = self.buffers.lock();
        self.ready = b
            .velocity
            .fresh_width(now, self.stale)
            .zip(b.direction.fresh_width(now, self.stale));
        self.ready.is_some()
    }

    fn read(&mut self, data: &mut MainData) -> Result<Order, IoError> {
        let (v, d) = self.ready.take().ok_or(IoError::EmptyRead)?;
        let order = self.interpretation.to_order(width_to_percent(v), width_to_percent(d));
        data.save_mode_id(ModeId::RC);
        Ok(order)
    }
}
