//! The per-cycle order sequence shared by every control sub-system.

use thiserror::Error;

use crate::kernel::SimTime;
use crate::messages::{Order, SetpointKind};

/// Immutable payload fanned out to every sub-system once per cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleCommand {
    pub cycle: u64,
    pub at: SimTime,
    /// The order in force this cycle (new or carried over).
    pub order: Order,
    /// Sequence number of `order`; bumps on every read, even for equal values.
    pub order_seq: u64,
    /// True iff `order` was read during this cycle.
    pub fresh: bool,
}

/// What a sub-system reports back through the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubsystemReport {
    pub setpoint: f64,
    pub measured: f64,
    /// Manipulated variable actually applied (volts for wheels, target degrees for steering).
    pub applied: f64,
    /// Measured current in mA; zero for steering.
    pub current: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubsystemError {
    #[error("no control strategy for {0:?} set-points")]
    StrategyNotFound(SetpointKind),
    #[error("sub-system `{name}` failed: {reason}")]
    Failed { name: String, reason: String },
}

/// Steps of the fixed cycle skeleton, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    ReadSensors,
    SelectSetpoint,
    Control,
    Actuate,
    Report,
}

/// A control sub-system driven by the main controller.
///
/// Implementors override the individual steps; the sequence itself lives in
/// [`ControlSubsystem::execute_cycle_orders`] and is not meant to be
/// overridden.
pub trait ControlSubsystem: Send {
    fn name(&self) -> &str;
    fn read_sensors(&mut self, cmd: &CycleCommand);
    fn select_setpoint(&mut self, cmd: &CycleCommand);
    fn control(&mut self, cmd: &CycleCommand) -> Result<(), SubsystemError>;
    fn actuate(&mut self, cmd: &CycleCommand);
    fn report(&self) -> SubsystemReport;

    /// Where to log executed steps, if tracing is on.
    fn step_trace(&mut self) -> Option<&mut Vec<Step>> {
        None
    }

    fn execute_cycle_orders(&mut self, cmd: &CycleCommand) -> Result<SubsystemReport, SubsystemError> {
        fn mark<S: ControlSubsystem + ?Sized>(s: &mut S, step: Step) {
            if let Some(trace) = s.step_trace() {
                trace.push(step);
            }
        }
        mark(self, Step::ReadSensors);
        self.read_sensors(cmd);
        mark(self, Step::SelectSetpoint);
        self.select_setpoint(cmd);
        mark(self, Step::Control);
        self.control(cmd)?;
        mark(self, Step::Actuate);
        self.actuate(cmd);
        mark(self, Step::Report);
        Ok(self.report())
    }
}

impl<S: ControlSubsystem + ?Sized> ControlSubsystem for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn read_sensors(&mut self, cmd: &CycleCommand) {
        (**self).read_sensors(cmd)
    }
    fn select_setpoint(&mut self, cmd: &CycleCommand) {
        (**self).select_setpoint(cmd)
    }
    fn control(&mut self, cmd: &CycleCommand) -> Result<(), SubsystemError> {
        (**self).control(cmd)
    }
    fn actuate(&mut self, cmd: &CycleCommand) {
        (**self).actuate(cmd)
    }
    fn report(&self) -> SubsystemReport {
        (**self).report()
    }
    fn step_trace(&mut self) -> Option<&mut Vec<Step>> {
        (**self).step_trace()
    }
    fn execute_cycle_orders(&mut self, cmd: &CycleCommand) -> Result<SubsystemReport, SubsystemError> {
        (**self).execute_cycle_orders(cmd)
    }
}
