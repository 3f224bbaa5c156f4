//! Steering control: turn-direction algorithm, enable state and operation
//! states, sub-stepped on the fast timer.

use std::sync::Arc;

use parking_lot::Mutex;

use crate::control::{ControlSubsystem, CycleCommand, Step, SubsystemError, SubsystemReport};
use crate::kernel::{CommandContext, ControlCommand, SimTime};
use crate::pipes::PipeReader;
use crate::plant::SteeringDevice;
use crate::sensors::DirSensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enable {
    Enabled,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteerOp {
    Idle,
    Turning,
    Holding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringCtrlState {
    pub enabled: Enable,
    pub op: SteerOp,
    /// Degrees.
    pub target: f64,
}

impl Default for SteeringCtrlState {
    fn default() -> Self {
        Self {
            enabled: Enable::Enabled,
            op: SteerOp::Idle,
            target: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteeringCommand {
    None,
    Drive { target: f64, direction: i8 },
}

/// One sub-step of the turn-direction algorithm.
pub fn dir_control_step(s: SteeringCtrlState, measured: f64, deadband: f64) -> (SteeringCtrlState, SteeringCommand) {
    if s.enabled == Enable::Disabled {
        return (SteeringCtrlState { op: SteerOp::Idle, ..s }, SteeringCommand::None);
    }
    let err = s.target - measured;
    if err.abs() <= deadband {
        return (
            SteeringCtrlState {
                op: SteerOp::Holding,
                ..s
            },
            SteeringCommand::None,
        );
    }
    let direction = if err > 0.0 { 1 } else { -1 };
    (
        SteeringCtrlState {
            op: SteerOp::Turning,
            ..s
        },
        SteeringCommand::Drive {
            target: s.target,
            direction,
        },
    )
}

pub fn set_enabled(s: SteeringCtrlState, on: bool) -> SteeringCtrlState {
    match (s.enabled, on) {
        (Enable::Enabled, true) | (Enable::Disabled, false) => s,
        (Enable::Disabled, true) => SteeringCtrlState {
            enabled: Enable::Enabled,
            op: SteerOp::Idle,
            ..s
        },
        (Enable::Enabled, false) => SteeringCtrlState {
            enabled: Enable::Disabled,
            op: SteerOp::Idle,
            ..s
        },
    }
}

/// Steering controller with its position sensor and device facade.
pub struct DirController {
    state: SteeringCtrlState,
    deadband: f64,
    sensor: DirSensor,
    position: PipeReader<f64>,
    device: SteeringDevice,
    commands: u64,
}

impl DirController {
    pub fn new(sensor: DirSensor, position: PipeReader<f64>, device: SteeringDevice, deadband: f64) -> Self {
        Self {
            state: SteeringCtrlState::default(),
            deadband,
            sensor,
            position,
            device,
            commands: 0,
        }
    }

    pub fn state(&self) -> SteeringCtrlState {
        self.state
    }

    /// Motion commands issued so far.
    pub fn commands_issued(&self) -> u64 {
        self.commands
    }

    pub fn set_target(&mut self, target: f64) {
        self.state.target = target;
    }

    pub fn set_enabled(&mut self, on: bool) {
        let was = self.state.enabled;
        self.state = set_enabled(self.state, on);
        if was == Enable::Enabled && !on {
            self.device.set_enabled(false);
        }
    }

    /// Samples the position and runs one control sub-step.
    pub fn tick(&mut self, at: SimTime) {
        self.sensor.sample(at);
        let measured = self.position.read_latest().value;
        let (next, cmd) = dir_control_step(self.state, measured, self.deadband);
        self.state = next;
        if let SteeringCommand::Drive { target, direction } = cmd {
            self.device.drive_toward(target, direction);
            self.commands += 1;
        }
    }
}

pub type SharedDirController = Arc<Mutex<DirController>>;

/// Fast-timer command driving the steering controller.
pub struct DirCtrlTimeOut(pub SharedDirController);

impl ControlCommand for DirCtrlTimeOut {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        self.0.lock().tick(ctx.now());
    }
}

/// A deferred action on the steering controller, run during the next actuation.
pub type SteeringCommandFn = Box<dyn FnOnce(&mut DirController) + Send>;

pub type SteeringInbox = Arc<Mutex<Vec<SteeringCommandFn>>>;

/// Steering sub-system seen by the main controller.
pub struct DirSystem {
    ctrl: SharedDirController,
    position: PipeReader<f64>,
    measured: f64,
    target: f64,
    enable: bool,
    seen_seq: Option<u64>,
    changed: bool,
    trace: Option<Vec<Step>>,
    inbox: SteeringInbox,
}

impl DirSystem {
    pub fn new(ctrl: SharedDirController, position: PipeReader<f64>) -> Self {
        Self {
            ctrl,
            position,
            measured: 0.0,
            target: 0.0,
            enable: true,
            seen_seq: None,
            changed: false,
            trace: None,
            inbox: SteeringInbox::default(),
        }
    }

    pub fn inbox(&self) -> SteeringInbox {
        self.inbox.clone()
    }

    pub fn controller(&self) -> SharedDirController {
        self.ctrl.clone()
    }

    pub fn enable_step_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_step_trace(&mut self) -> Vec<Step> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }
}

impl ControlSubsystem for DirSystem {
    fn name(&self) -> &str {
        "steering"
    }

    fn read_sensors(&mut self, _cmd: &CycleCommand) {
        self.measured = self.position.read_latest().value;
    }

    fn select_setpoint(&mut self, cmd: &CycleCommand) {
        if self.seen_seq != Some(cmd.order_seq) {
            self.seen_seq = Some(cmd.order_seq);
            self.target = cmd.order.steering();
            self.enable = !cmd.order.is_stop();
            self.changed = true;
        }
    }

    fn control(&mut self, _cmd: &CycleCommand) -> Result<(), SubsystemError> {
        Ok(())
    }

    fn actuate(&mut self, _cmd: &CycleCommand) {
        let mut c = self.ctrl.lock();
        if std::mem::take(&mut self.changed) {
            c.set_enabled(self.enable);
            c.set_target(self.target);
        }
        for f in std::mem::take(&mut *self.inbox.lock()) {
            f(&mut c);
        }
    }

    fn report(&self) -> SubsystemReport {
        SubsystemReport {
            setpoint: self.target,
            measured: self.measured,
            applied: self.target,
            current: 0.0,
        }
    }

    fn step_trace(&mut self) -> Option<&mut Vec<Step>> {
        self.trace.as_mut()
    }
}
