//! Virtual clock, periodic timers and interrupt dispatch.
//!
//! Hardware interrupts and timer expiries are modelled as events on a
//! single virtual time line. Each event source has a [`ControlCommand`]
//! bound to it; the kernel only knows how to order and invoke commands,
//! never what they do, so handlers can be swapped per interrupt id.
//!
//! Ordering at equal timestamps: interrupts before timers; interrupts by
//! registration order of their id, then raise order; timers by shorter
//! period, then registration order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::ops::{Add, Sub};

use thiserror::Error;

/// A point on the simulated time line, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

/// A span of simulated time, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * 1000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub<SimTime> for SimTime {
    type Output = SimDuration;
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterruptId(pub u16);

impl fmt::Display for InterruptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "irq{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(u32);

/// Returned by [`Kernel::schedule_periodic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerHandle {
    pub id: TimerId,
    pub period: SimDuration,
    /// First expiry: registration time plus one period.
    pub next_fire: SimTime,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("timer period must be positive")]
    ZeroPeriod,
    #[error("no command registered for {0}")]
    UnhandledInterrupt(InterruptId),
    #[error("a command is already registered for {0}")]
    DuplicateInterrupt(InterruptId),
    #[error("cannot move time backwards from {now} to {requested}")]
    TimeReversal { now: SimTime, requested: SimTime },
    #[error("unknown timer {0:?}")]
    UnknownTimer(TimerId),
}

/// Execution environment handed to a command.
pub struct CommandContext<'a> {
    now: SimTime,
    data: u32,
    raised: &'a mut Vec<(InterruptId, SimTime, u32)>,
}

impl CommandContext<'_> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Data word latched with the interrupt (0 for timers).
    pub fn data(&self) -> u32 {
        self.data
    }

    /// Requests an interrupt; validated by the kernel once the command returns.
    pub fn raise(&mut self, id: InterruptId, at: SimTime, data: u32) {
        self.raised.push((id, at, data));
    }
}

/// An invokable action bound to an interrupt or timer.
pub trait ControlCommand: Send {
    fn execute(&mut self, ctx: &mut CommandContext<'_>);
}

impl<F> ControlCommand for F
where
    F: FnMut(&mut CommandContext<'_>) + Send,
{
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        self(ctx)
    }
}

/// Runs several commands in order as one.
#[derive(Default)]
pub struct CommandList(Vec<Box<dyn ControlCommand>>);

impl CommandList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, cmd: Box<dyn ControlCommand>) {
        self.0.push(cmd);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl ControlCommand for CommandList {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        for cmd in &mut self.0 {
            cmd.execute(ctx);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSource {
    Timer(TimerId),
    Interrupt(InterruptId),
}

/// One executed event, as recorded by the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub at: SimTime,
    pub source: EventSource,
    pub data: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Interrupt,
    Timer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    at: SimTime,
    class: Class,
    // interrupts: (registration order, raise order); timers: (period, registration order)
    k1: u64,
    k2: u64,
    target: u32,
    data: u32,
}

struct TimerSlot {
    period: SimDuration,
    next_fire: SimTime,
    reg: u64,
    cmd: Option<Box<dyn ControlCommand>>,
}

struct IrqSlot {
    reg: u64,
    cmd: Option<Box<dyn ControlCommand>>,
}

/// Deterministic discrete-event kernel. Single owner.
#[derive(Default)]
pub struct Kernel {
    now: SimTime,
    timers: BTreeMap<TimerId, TimerSlot>,
    interrupts: BTreeMap<InterruptId, IrqSlot>,
    queue: BinaryHeap<Reverse<Pending>>,
    next_timer: u32,
    next_reg: u64,
    next_raise: u64,
    trace: Option<Vec<EventRecord>>,
}

impl Kernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Starts recording every executed event.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[EventRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<EventRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Fires `cmd` at now + k·period for k = 1, 2, … until cancelled.
    pub fn schedule_periodic(
        &mut self,
        period: SimDuration,
        cmd: Box<dyn ControlCommand>,
    ) -> Result<TimerHandle, KernelError> {
        if period.is_zero() {
            return Err(KernelError::ZeroPeriod);
        }
        let id = TimerId(self.next_timer);
        self.next_timer += 1;
        let reg = self.bump_reg();
        let next_fire = self.now + period;
        self.timers.insert(
            id,
            TimerSlot {
                period,
                next_fire,
                reg,
                cmd: Some(cmd),
            },
        );
        self.push_timer(id, period, next_fire, reg);
        Ok(TimerHandle { id, period, next_fire })
    }

    pub fn cancel(&mut self, id: TimerId) -> Result<(), KernelError> {
        self.timers.remove(&id).map(|_| ()).ok_or(KernelError::UnknownTimer(id))
    }

    pub fn timer_next_fire(&self, id: TimerId) -> Option<SimTime> {
        self.timers.get(&id).map(|t| t.next_fire)
    }

    pub fn register_interrupt(&mut self, id: InterruptId, cmd: Box<dyn ControlCommand>) -> Result<(), KernelError> {
        if self.interrupts.contains_key(&id) {
            return Err(KernelError::DuplicateInterrupt(id));
        }
        let reg = self.bump_reg();
        self.interrupts.insert(id, IrqSlot { reg, cmd: Some(cmd) });
        Ok(())
    }

    /// Swaps the handler of an already registered interrupt, returning the old one.
    pub fn replace_interrupt(
        &mut self,
        id: InterruptId,
        cmd: Box<dyn ControlCommand>,
    ) -> Result<Box<dyn ControlCommand>, KernelError> {
        let slot = self
            .interrupts
            .get_mut(&id)
            .ok_or(KernelError::UnhandledInterrupt(id))?;
        Ok(slot.cmd.replace(cmd).expect("handler present outside dispatch"))
    }

    pub fn is_registered(&self, id: InterruptId) -> bool {
        self.interrupts.contains_key(&id)
    }

    pub fn interrupt_ids(&self) -> impl Iterator<Item = InterruptId> + '_ {
        self.interrupts.keys().copied()
    }

    pub fn timer_count(&self) -> usize {
        self.timers.len()
    }

    pub fn raise_interrupt(&mut self, id: InterruptId, at: SimTime) -> Result<(), KernelError> {
        self.raise_interrupt_with(id, at, 0)
    }

    /// Queues interrupt `id` for time `at` with a latched data word.
    pub fn raise_interrupt_with(&mut self, id: InterruptId, at: SimTime, data: u32) -> Result<(), KernelError> {
        let reg = self.interrupts.get(&id).ok_or(KernelError::UnhandledInterrupt(id))?.reg;
        if at < self.now {
            return Err(KernelError::TimeReversal {
                now: self.now,
                requested: at,
            });
        }
        let raise = self.next_raise;
        self.next_raise += 1;
        self.queue.push(Reverse(Pending {
            at,
            class: Class::Interrupt,
            k1: reg,
            k2: raise,
            target: id.0 as u32,
            data,
        }));
        Ok(())
    }

    /// Executes every event with time ≤ `t` in order, then sets now = `t`.
    pub fn advance_until(&mut self, t: SimTime) -> Result<(), KernelError> {
        if t < self.now {
            return Err(KernelError::TimeReversal {
                now: self.now,
                requested: t,
            });
        }
        let mut raised = Vec::new();
        while let Some(Reverse(ev)) = self.queue.peek().copied() {
            if ev.at > t {
                break;
            }
            self.queue.pop();
            self.now = ev.at;
            match ev.class {
                Class::Timer => self.fire_timer(TimerId(ev.target), ev, &mut raised),
                Class::Interrupt => self.fire_interrupt(InterruptId(ev.target as u16), ev, &mut raised),
            }
            for (id, at, data) in raised.drain(..) {
                self.raise_interrupt_with(id, at, data)?;
            }
        }
        self.now = t;
        Ok(())
    }

    fn fire_timer(&mut self, id: TimerId, ev: Pending, raised: &mut Vec<(InterruptId, SimTime, u32)>) {
        let Some(slot) = self.timers.get_mut(&id) else {
            return; // cancelled
        };
        if slot.next_fire != ev.at {
            return;
        }
        let mut cmd = slot.cmd.take().expect("timer command present");
        let mut ctx = CommandContext {
            now: ev.at,
            data: 0,
            raised,
        };
        cmd.execute(&mut ctx);
        if let Some(trace) = &mut self.trace {
            trace.push(EventRecord {
                at: ev.at,
                source: EventSource::Timer(id),
                data: 0,
            });
        }
        let slot = self.timers.get_mut(&id).expect("timer still registered");
        slot.cmd = Some(cmd);
        slot.next_fire = ev.at + slot.period;
        let (period, next, reg) = (slot.period, slot.next_fire, slot.reg);
        self.push_timer(id, period, next, reg);
    }

    fn fire_interrupt(&mut self, id: InterruptId, ev: Pending, raised: &mut Vec<(InterruptId, SimTime, u32)>) {
        let Some(slot) = self.interrupts.get_mut(&id) else {
            return;
        };
        let mut cmd = slot.cmd.take().expect("interrupt command present");
        let mut ctx = CommandContext {
            now: ev.at,
            data: ev.data,
            raised,
        };
        cmd.execute(&mut ctx);
        if let Some(trace) = &mut self.trace {
            trace.push(EventRecord {
                at: ev.at,
                source: EventSource::Interrupt(id),
                data: ev.data,
            });
        }
        if let Some(slot) = self.interrupts.get_mut(&id) {
            slot.cmd = Some(cmd);
        }
    }

    fn push_timer(&mut self, id: TimerId, period: SimDuration, at: SimTime, reg: u64) {
        self.queue.push(Reverse(Pending {
            at,
            class: Class::Timer,
            k1: period.as_micros(),
            k2: reg,
            target: id.0,
            data: 0,
        }));
    }

    fn bump_reg(&mut self) -> u64 {
        let r = self.next_reg;
        self.next_reg += 1;
        r
    }
}
