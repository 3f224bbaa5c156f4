//! Measurement stacks that turn plant observations into pipe values.
//!
//! Velocity: Hall edge interrupts feed a [`PulseAccumulator`] through a
//! [`SensorCollector`] (optionally decorated), and a [`VelSensor`] turns the
//! window count into rpm once per control cycle. Current and position are
//! sampled on the fast timer by [`CntSensor`] and [`DirSensor`].

use std::collections::VecDeque;
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use crate::kernel::{CommandContext, ControlCommand, SimDuration, SimTime};
use crate::pipes::PipeWriter;
use crate::plant::{SharedSteeringPlant, SharedWheelPlant, HALL_REVERSE};

/// Default size of the edge timestamp ring.
pub const TIMESTAMP_RING: usize = 64;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SensorError {
    #[error("edge at {at} precedes last edge at {last}")]
    OutOfOrder { last: SimTime, at: SimTime },
}

/// Edges seen since the last velocity sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseAccumulator {
    count: u32,
    net: i64,
    window_start: SimTime,
    timestamps: VecDeque<SimTime>,
    capacity: usize,
}

impl Default for PulseAccumulator {
    fn default() -> Self {
        Self::new(TIMESTAMP_RING)
    }
}

impl PulseAccumulator {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "timestamp ring needs room for one edge");
        Self {
            count: 0,
            net: 0,
            window_start: SimTime::ZERO,
            timestamps: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn on_hall_edge(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError> {
        if let Some(&last) = self.timestamps.back() {
            if at < last {
                return Err(SensorError::OutOfOrder { last, at });
            }
        }
        if self.timestamps.len() == self.capacity {
            self.timestamps.pop_front();
        }
        self.timestamps.push_back(at);
        self.count += 1;
        self.net += if reverse { -1 } else { 1 };
        Ok(())
    }

    /// Edges since the window started.
    pub fn count(&self) -> u32 {
        self.count
    }

    /// Edge count signed by the direction of each edge.
    pub fn net(&self) -> i64 {
        self.net
    }

    pub fn window_start(&self) -> SimTime {
        self.window_start
    }

    /// Recent edge times, oldest first. Survives window resets.
    pub fn timestamps(&self) -> &VecDeque<SimTime> {
        &self.timestamps
    }

    /// Closes the current window at `at` and returns its signed count.
    pub fn reset_window(&mut self, at: SimTime) -> i64 {
        let net = self.net;
        self.count = 0;
        self.net = 0;
        self.window_start = at;
        net
    }
}

/// rpm from a signed edge count over a window: `net·60/(P·dt)`.
pub fn sample_velocity(net: i64, window: SimDuration, pulses_per_rev: u32) -> f64 {
    debug_assert!(!window.is_zero() && pulses_per_rev > 0);
    // Integer microseconds keep exact multiples exact.
    (net as f64 * 60e6) / (pulses_per_rev as f64 * window.as_micros() as f64)
}

/// Aggregates Hall edges for one wheel.
pub trait SensorCollector: Send {
    fn record(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError>;
    fn accumulator(&self) -> &PulseAccumulator;
    /// Closes the window; returns the signed count and its length.
    fn take_window(&mut self, at: SimTime) -> (i64, SimDuration);
}

impl SensorCollector for PulseAccumulator {
    fn record(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError> {
        self.on_hall_edge(at, reverse)
    }

    fn accumulator(&self) -> &PulseAccumulator {
        self
    }

    fn take_window(&mut self, at: SimTime) -> (i64, SimDuration) {
        let span = at.saturating_since(self.window_start);
        (self.reset_window(at), span)
    }
}

impl<C: SensorCollector + ?Sized> SensorCollector for Box<C> {
    fn record(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError> {
        (**self).record(at, reverse)
    }

    fn accumulator(&self) -> &PulseAccumulator {
        (**self).accumulator()
    }

    fn take_window(&mut self, at: SimTime) -> (i64, SimDuration) {
        (**self).take_window(at)
    }
}

fn last_gap(acc: &PulseAccumulator) -> Option<SimDuration> {
    let ts = acc.timestamps();
    let n = ts.len();
    (n >= 2).then(|| ts[n - 1] - ts[n - 2])
}

/// Adds the interval between the two most recent edges.
#[derive(Debug, Clone)]
pub struct PeriodCollector<C> {
    inner: C,
}

impl<C: SensorCollector> PeriodCollector<C> {
    pub fn new(inner: C) -> Self {
        Self { inner }
    }

    pub fn period(&self) -> Option<SimDuration> {
        last_gap(self.inner.accumulator())
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: SensorCollector> SensorCollector for PeriodCollector<C> {
    fn record(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError> {
        self.inner.record(at, reverse)
    }

    fn accumulator(&self) -> &PulseAccumulator {
        self.inner.accumulator()
    }

    fn take_window(&mut self, at: SimTime) -> (i64, SimDuration) {
        self.inner.take_window(at)
    }
}

/// Adds the instantaneous edge frequency in Hz.
#[derive(Debug, Clone)]
pub struct FrequencyCollector<C> {
    inner: C,
}

impl<C: SensorCollector> FrequencyCollector<C> {
    pub fn new(inner: C) -> Self {
        Self { inner }
    }

    /// None until two distinct edge times have been seen.
    pub fn frequency_hz(&self) -> Option<f64> {
        last_gap(self.inner.accumulator())
            .filter(|gap| !gap.is_zero())
            .map(|gap| 1.0 / gap.as_secs_f64())
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: SensorCollector> SensorCollector for FrequencyCollector<C> {
    fn record(&mut self, at: SimTime, reverse: bool) -> Result<(), SensorError> {
        self.inner.record(at, reverse)
    }

    fn accumulator(&self) -> &PulseAccumulator {
        self.inner.accumulator()
    }

    fn take_window(&mut self, at: SimTime) -> (i64, SimDuration) {
        self.inner.take_window(at)
    }
}

pub type SharedCollector = Arc<Mutex<Box<dyn SensorCollector>>>;

pub fn shared_collector(c: impl SensorCollector + 'static) -> SharedCollector {
    Arc::new(Mutex::new(Box::new(c)))
}

/// Interrupt command for one wheel's Hall sensor.
pub struct HallEdgeCommand {
    collector: SharedCollector,
}

impl HallEdgeCommand {
    pub fn new(collector: SharedCollector) -> Self {
        Self { collector }
    }
}

impl ControlCommand for HallEdgeCommand {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        let reverse = ctx.data() == HALL_REVERSE;
        if let Err(e) = self.collector.lock().record(ctx.now(), reverse) {
            log::warn!("hall edge dropped: {e}");
        }
    }
}

/// Something that publishes a measurement to a pipe when asked.
pub trait MeasurementSource: Send {
    fn publish(&mut self, at: SimTime);
}

/// Velocity sensor: closes the collector window and writes rpm.
pub struct VelSensor {
    collector: SharedCollector,
    writer: PipeWriter<f64>,
    pulses_per_rev: u32,
}

impl VelSensor {
    pub fn new(collector: SharedCollector, writer: PipeWriter<f64>, pulses_per_rev: u32) -> Self {
        assert!(pulses_per_rev > 0);
        Self {
            collector,
            writer,
            pulses_per_rev,
        }
    }
}

impl MeasurementSource for VelSensor {
    fn publish(&mut self, at: SimTime) {
        let (net, span) = self.collector.lock().take_window(at);
        let rpm = if span.is_zero() {
            0.0
        } else {
            sample_velocity(net, span, self.pulses_per_rev)
        };
        self.writer.write(rpm, at);
    }
}

/// Holds the latest raw current sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValueCollector {
    pub value: f64,
    pub at: SimTime,
    pub samples: u64,
}

impl ValueCollector {
    pub fn push(&mut self, value: f64, at: SimTime) {
        self.value = value;
        self.at = at;
        self.samples += 1;
    }
}

/// Clips a raw current to the sensor range.
pub fn clip_current(ma: f64, limit: f64) -> f64 {
    ma.clamp(-limit, limit)
}

/// Current sensor: reads the plant, clips, writes the pipe.
pub struct CntSensor {
    plant: SharedWheelPlant,
    collector: ValueCollector,
    writer: PipeWriter<f64>,
    limit: f64,
}

impl CntSensor {
    pub fn new(plant: SharedWheelPlant, writer: PipeWriter<f64>, limit: f64) -> Self {
        Self {
            plant,
            collector: ValueCollector::default(),
            writer,
            limit,
        }
    }

    pub fn sample(&mut self, at: SimTime) -> f64 {
        let raw = self.plant.lock().current_ma();
        self.collector.push(raw, at);
        let ma = clip_current(raw, self.limit);
        self.writer.write(ma, at);
        ma
    }
}

/// Fast-timer command sampling every wheel current.
pub struct ReadCnt {
    pub sensors: Vec<CntSensor>,
}

impl ControlCommand for ReadCnt {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        for s in &mut self.sensors {
            s.sample(ctx.now());
        }
    }
}

/// Truncates toward zero onto the 0.1° grid.
pub fn quantize_position(deg: f64) -> f64 {
    // Nudge by a tiny epsilon so values that are exact tenths in decimal
    // but slightly below in binary (e.g. 0.3) stay on their own step.
    let tenths = deg * 10.0;
    let q = (tenths + tenths.signum() * 1e-9).trunc();
    q / 10.0
}

/// Steering position sensor.
pub struct DirSensor {
    plant: SharedSteeringPlant,
    writer: PipeWriter<f64>,
}

impl DirSensor {
    pub fn new(plant: SharedSteeringPlant, writer: PipeWriter<f64>) -> Self {
        Self { plant, writer }
    }

    pub fn sample(&mut self, at: SimTime) -> f64 {
        let deg = quantize_position(self.plant.lock().state().position);
        self.writer.write(deg, at);
        deg
    }
}
