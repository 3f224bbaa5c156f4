//! The main controller: read, control and write once per control cycle.

use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;

use super::fsm::{fsm_step, Action, CtrlState, OpState};
use super::pool::SubsystemPool;
use super::subsystem::{CycleCommand, SubsystemReport};
use crate::io::{MainData, Mode, ModeId, SerialWriter};
use crate::kernel::{CommandContext, ControlCommand, SimTime};
use crate::messages::{Order, Telemetry, WHEEL_COUNT};

/// Whether compute time is measured with the host clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Wall,
    /// Always report zero, for byte-identical output.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelMetrics {
    pub setpoint: f64,
    pub rpm: f64,
    pub volts: f64,
    pub ma: f64,
}

/// One control cycle, as recorded by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    pub cycle: u64,
    pub compute_us: u64,
    pub op_state: OpState,
    pub mode: ModeId,
    pub wheels: [WheelMetrics; WHEEL_COUNT],
    pub steer_sp: f64,
    pub steer_deg: f64,
    pub fault: bool,
}

pub struct MainController {
    modes: Vec<Box<dyn Mode>>,
    state: CtrlState,
    data: MainData,
    pool: SubsystemPool,
    writer: Option<SerialWriter>,
    timing: Timing,
    order_seq: u64,
    cycle: u64,
    last_reports: Vec<SubsystemReport>,
    write_errors: u64,
}

impl MainController {
    /// `modes[0]` is the initial reading mode. The pool must hold the wheel
    /// sub-systems in order followed by the steering sub-system.
    pub fn new(
        modes: Vec<Box<dyn Mode>>,
        wait_depth: u8,
        pool: SubsystemPool,
        writer: Option<SerialWriter>,
        timing: Timing,
    ) -> Self {
        assert_eq!(
            pool.len(),
            WHEEL_COUNT + 1,
            "pool must hold four wheels and the steering"
        );
        let n = modes.len();
        Self {
            modes,
            state: CtrlState::initial(wait_depth, n),
            data: MainData::default(),
            pool,
            writer,
            timing,
            order_seq: 0,
            cycle: 0,
            last_reports: vec![SubsystemReport::default(); WHEEL_COUNT + 1],
            write_errors: 0,
        }
    }

    pub fn state(&self) -> &CtrlState {
        &self.state
    }

    pub fn mode_id(&self) -> ModeId {
        self.modes[self.state.mode].id()
    }

    pub fn mode_ids(&self) -> Vec<ModeId> {
        self.modes.iter().map(|m| m.id()).collect()
    }

    pub fn data(&self) -> &MainData {
        &self.data
    }

    pub fn pool_mut(&mut self) -> &mut SubsystemPool {
        &mut self.pool
    }

    pub fn writer(&self) -> Option<&SerialWriter> {
        self.writer.as_ref()
    }

    pub fn write_errors(&self) -> u64 {
        self.write_errors
    }

    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    /// Polls the current mode and advances the state machines. Returns
    /// true iff a new order was read.
    fn read_phase(&mut self, now: SimTime) -> bool {
        let available = self.modes[self.state.mode].new_message(now);
        let reading = self.state.mode;
        let (next, action) = fsm_step(&self.state, available);
        self.state = next;
        match action {
            Action::ReadNew => match self.modes[reading].read(&mut self.data) {
                Ok(order) => {
                    self.state.last_order = order;
                    self.order_seq += 1;
                    true
                }
                Err(e) => {
                    log::warn!(
                        "mode {} announced a message but read failed: {e}",
                        self.modes[reading].id()
                    );
                    false
                }
            },
            Action::UsePrevious => false,
        }
    }

    fn control_phase(&mut self, now: SimTime, fresh: bool) -> bool {
        let cmd = CycleCommand {
            cycle: self.cycle,
            at: now,
            order: self.state.last_order,
            order_seq: self.order_seq,
            fresh,
        };
        let mut fault = false;
        for (slot, result) in self.last_reports.iter_mut().zip(self.pool.run_cycle(&cmd)) {
            match result {
                Ok(r) => *slot = r,
                Err(e) => {
                    log::error!("cycle {}: {e}", self.cycle);
                    fault = true;
                }
            }
        }
        fault
    }

    fn metrics(&self, compute_us: u64, fault: bool) -> CycleMetrics {
        let mut wheels = [WheelMetrics::default(); WHEEL_COUNT];
        for (w, r) in wheels.iter_mut().zip(&self.last_reports) {
            *w = WheelMetrics {
                setpoint: r.setpoint,
                rpm: r.measured,
                volts: r.applied,
                ma: r.current,
            };
        }
        let steer = self.last_reports[WHEEL_COUNT];
        CycleMetrics {
            cycle: self.cycle,
            compute_us,
            op_state: self.state.op,
            mode: self.mode_id(),
            wheels,
            steer_sp: steer.setpoint,
            steer_deg: steer.measured,
            fault,
        }
    }

    fn telemetry(m: &CycleMetrics) -> Telemetry {
        Telemetry {
            cycle: m.cycle as u16,
            velocity: m.wheels.map(|w| w.rpm),
            current: m.wheels.map(|w| w.ma),
            position: m.steer_deg,
            compute_us: m.compute_us.min(u16::MAX as u64) as u16,
            op_state: m.op_state.code(),
            mode: m.mode.0,
            fault: m.fault,
        }
    }

    /// One full control cycle.
    pub fn on_control_tick(&mut self, now: SimTime) -> CycleMetrics {
        let started = Instant::now();
        let fresh = self.read_phase(now);
        let fault = self.control_phase(now, fresh);
        let elapsed = || match self.timing {
            Timing::Wall => started.elapsed().as_micros() as u64,
            Timing::Off => 0,
        };
        let mut m = self.metrics(elapsed(), fault);
        if let Some(w) = self.writer.as_mut() {
            if let Err(e) = w.write(&Self::telemetry(&m)) {
                log::warn!("cycle {}: {e}", self.cycle);
                self.write_errors += 1;
            }
        }
        if self.timing == Timing::Wall {
            m.compute_us = started.elapsed().as_micros() as u64;
        }
        self.cycle += 1;
        m
    }
}

pub type SharedMainController = Arc<Mutex<MainController>>;
pub type MetricsLog = Arc<Mutex<Vec<CycleMetrics>>>;

/// Main timer command: runs a control cycle and records its metrics.
pub struct ControllerTimeOut {
    pub controller: SharedMainController,
    pub log: MetricsLog,
}

impl ControlCommand for ControllerTimeOut {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        let m = self.controller.lock().on_control_tick(ctx.now());
        self.log.lock().push(m);
    }
}

/// The order a controller starts with.
pub fn initial_order() -> Order {
    CtrlState::initial(1, 1).last_order
}
