//! Per-wheel control: algorithm selection, behaviour shaping, and the
//! wheel sub-system that runs the cycle skeleton.

pub mod behaviour;
pub mod strategy;

use std::sync::Arc;

use parking_lot::Mutex;

use crate::control::{ControlSubsystem, CycleCommand, Step, SubsystemError, SubsystemReport};
use crate::messages::{Order, Source};
use crate::pipes::PipeReader;
use crate::plant::Wheel;
use crate::sensors::MeasurementSource;

pub use behaviour::{Advance, Behaviour, Reverse, SoftStop, Stop};
pub use strategy::{ControlAlgorithm, CurrentPi, Measurements, PiState, StrategyTable, TensionPassthrough, VelocityPi};

/// Computes one wheel's tension from its order and measurements.
pub struct WheelController {
    strategies: StrategyTable,
    behaviour: Box<dyn Behaviour>,
    dt: f64,
}

impl WheelController {
    pub fn new(strategies: StrategyTable, dt: f64) -> Self {
        assert!(dt > 0.0);
        Self {
            strategies,
            behaviour: Box::new(Advance),
            dt,
        }
    }

    pub fn set_behaviour(&mut self, behaviour: Box<dyn Behaviour>) {
        self.behaviour = behaviour;
    }

    pub fn behaviour(&self) -> String {
        self.behaviour.describe()
    }

    pub fn strategies_mut(&mut self) -> &mut StrategyTable {
        &mut self.strategies
    }

    /// Volts to apply for wheel `index` under `order`.
    pub fn control_step(&mut self, order: &Order, index: usize, m: &Measurements) -> Result<f64, SubsystemError> {
        match order {
            Order::Stop { .. } => {
                self.strategies.reset_all();
                Ok(Stop(&mut self.behaviour).shape(0.0))
            }
            Order::Setpoint { kind, wheels, .. } => {
                let u = self.strategies.control_step(*kind, wheels[index], m, self.dt)?;
                Ok(self.behaviour.shape(u))
            }
        }
    }
}

/// A deferred action on a wheel controller, run at the start of the next cycle.
pub type WheelCommand = Box<dyn FnOnce(&mut WheelController) + Send>;

/// Queue of wheel commands shared with whoever issues them.
pub type WheelInbox = Arc<Mutex<Vec<WheelCommand>>>;

/// One wheel's controller, sensor stack and actuator.
pub struct WheelSystem {
    name: String,
    index: usize,
    controller: WheelController,
    velocity: Box<dyn MeasurementSource>,
    vel_pipe: PipeReader<f64>,
    cur_pipe: PipeReader<f64>,
    wheel: Wheel,
    meas: Measurements,
    order: Order,
    seen_seq: Option<u64>,
    output: f64,
    applied: f64,
    trace: Option<Vec<Step>>,
    inbox: WheelInbox,
}

impl WheelSystem {
    pub fn new(
        index: usize,
        controller: WheelController,
        velocity: Box<dyn MeasurementSource>,
        vel_pipe: PipeReader<f64>,
        cur_pipe: PipeReader<f64>,
        wheel: Wheel,
    ) -> Self {
        Self {
            name: format!("wheel{index}"),
            index,
            controller,
            velocity,
            vel_pipe,
            cur_pipe,
            wheel,
            meas: Measurements::default(),
            order: Order::stop(Source::Pc),
            seen_seq: None,
            output: 0.0,
            applied: 0.0,
            trace: None,
            inbox: WheelInbox::default(),
        }
    }

    pub fn inbox(&self) -> WheelInbox {
        self.inbox.clone()
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn controller_mut(&mut self) -> &mut WheelController {
        &mut self.controller
    }

    pub fn enable_step_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_step_trace(&mut self) -> Vec<Step> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Order currently being executed.
    pub fn order(&self) -> Order {
        self.order
    }
}

impl ControlSubsystem for WheelSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn read_sensors(&mut self, cmd: &CycleCommand) {
        self.velocity.publish(cmd.at);
        self.meas = Measurements {
            velocity: self.vel_pipe.read_latest().value,
            current: self.cur_pipe.read_latest().value,
        };
    }

    fn select_setpoint(&mut self, cmd: &CycleCommand) {
        let queued = std::mem::take(&mut *self.inbox.lock());
        for c in queued {
            c(&mut self.controller);
        }
        if self.seen_seq != Some(cmd.order_seq) {
            self.order = cmd.order;
            self.seen_seq = Some(cmd.order_seq);
        }
    }

    fn control(&mut self, _cmd: &CycleCommand) -> Result<(), SubsystemError> {
        self.output = self.controller.control_step(&self.order, self.index, &self.meas)?;
        Ok(())
    }

    fn actuate(&mut self, _cmd: &CycleCommand) {
        self.applied = self.wheel.apply_tension(self.output);
    }

    fn report(&self) -> SubsystemReport {
        SubsystemReport {
            setpoint: self.order.wheel(self.index),
            measured: self.meas.velocity,
            applied: self.applied,
            current: self.meas.current,
        }
    }

    fn step_trace(&mut self) -> Option<&mut Vec<Step>> {
        self.trace.as_mut()
    }
}
