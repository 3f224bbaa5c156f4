//! Builders that wire plants, sensors, controllers, sources and kernel
//! registrations into a runnable system.

use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use super::fsm::MAX_WAIT_DEPTH;
use super::main_controller::{ControllerTimeOut, MainController, MetricsLog, SharedMainController, Timing};
use super::pool::{PoolMode, SubsystemPool};
use super::subsystem::ControlSubsystem;
use crate::config::{ConfigError, Settings};
use crate::io::rc::SharedRcBuffers;
use crate::io::{
    ByteSink, ByteSource, MemoryStream, Mode, PcMode, RcBuffers, RcChannel, RcMode, RcPinCommand, SerialLink,
    SerialWriter, SharedLink, StandardRc,
};
use crate::kernel::{CommandList, InterruptId, Kernel, KernelError, SimDuration, SimTime};
use crate::messages::WHEEL_COUNT;
use crate::pipes::{pipe, PipeWriter};
use crate::plant::{
    PhysicsCommand, SharedSteeringPlant, SharedWheelPlant, SteeringDevice, SteeringParams, SteeringPlant, Wheel,
    WheelParams, WheelPlant,
};
use crate::sensors::{
    shared_collector, CntSensor, DirSensor, HallEdgeCommand, MeasurementSource, PulseAccumulator, ReadCnt,
    SharedCollector, VelSensor,
};
use crate::steering::{DirController, DirCtrlTimeOut, DirSystem, SharedDirController, SteeringInbox};
use crate::wheel::{
    CurrentPi, PiState, StrategyTable, TensionPassthrough, VelocityPi, WheelController, WheelInbox, WheelSystem,
};

/// Hall sensor of wheel `i` raises `InterruptId(HALL_IRQ_BASE + i)`.
pub const HALL_IRQ_BASE: u16 = 0;
pub const RC_VELOCITY_IRQ: InterruptId = InterruptId(4);
pub const RC_DIRECTION_IRQ: InterruptId = InterruptId(5);

pub fn hall_irq(wheel: usize) -> InterruptId {
    InterruptId(HALL_IRQ_BASE + wheel as u16)
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Replaces the velocity sensor of a wheel. Receives the wheel index, the
/// velocity pipe's writer and the wheel's Hall collector.
pub type VelocitySourceFactory = Box<dyn FnMut(usize, PipeWriter<f64>, SharedCollector) -> Box<dyn MeasurementSource>>;

fn cycle_secs(cfg: &Settings) -> Result<f64, ConfigError> {
    Ok(cfg.positive("timing.cycle_ms")? / 1000.0)
}

fn millis(cfg: &Settings, key: &str) -> Result<SimDuration, ConfigError> {
    let ms = cfg.positive(key)?;
    let us = (ms * 1000.0).round();
    if us < 1.0 {
        return Err(ConfigError::OutOfRange {
            key: key.into(),
            reason: "must be at least 1 us".into(),
        });
    }
    Ok(SimDuration::from_micros(us as u64))
}

pub struct WheelParts {
    pub system: WheelSystem,
    pub plant: SharedWheelPlant,
    pub hall: HallEdgeCommand,
    pub current_sensor: CntSensor,
    pub inbox: WheelInbox,
}

pub fn build_wheel_system(
    cfg: &Settings,
    index: usize,
    velocity: Option<&mut VelocitySourceFactory>,
) -> Result<WheelParts, BuildError> {
    let params = WheelParams::from_settings(cfg)?;
    let limit = cfg.positive("wheel.output_limit")?;
    let mut strategies = StrategyTable::new();
    strategies.insert(Box::new(VelocityPi(PiState::new(
        cfg.finite("wheel.kp")?,
        cfg.finite("wheel.ki")?,
        limit,
    ))));
    strategies.insert(Box::new(CurrentPi(PiState::new(
        cfg.finite("wheel.current_kp")?,
        cfg.finite("wheel.current_ki")?,
        limit,
    ))));
    strategies.insert(Box::new(TensionPassthrough { limit }));
    let ring: usize = cfg.get("sensor.ring")?;
    if ring == 0 {
        return Err(ConfigError::OutOfRange {
            key: "sensor.ring".into(),
            reason: "must be > 0".into(),
        }
        .into());
    }
    let current_limit = cfg.positive("sensor.current_limit")?;
    let controller = WheelController::new(strategies, cycle_secs(cfg)?);

    let plant = Arc::new(Mutex::new(WheelPlant::new(params)));
    let collector = shared_collector(PulseAccumulator::new(ring));
    let (vel_w, vel_r) = pipe();
    let (cur_w, cur_r) = pipe();
    let source: Box<dyn MeasurementSource> = match velocity {
        Some(make) => make(index, vel_w, collector.clone()),
        None => Box::new(VelSensor::new(collector.clone(), vel_w, params.pulses_per_rev)),
    };
    let system = WheelSystem::new(index, controller, source, vel_r, cur_r, Wheel::new(plant.clone()));
    let inbox = system.inbox();
    Ok(WheelParts {
        system,
        hall: HallEdgeCommand::new(collector),
        current_sensor: CntSensor::new(plant.clone(), cur_w, current_limit),
        plant,
        inbox,
    })
}

pub struct DirParts {
    pub system: DirSystem,
    pub plant: SharedSteeringPlant,
    pub controller: SharedDirController,
    pub timeout: DirCtrlTimeOut,
    pub inbox: SteeringInbox,
}

pub fn build_dir_system(cfg: &Settings) -> Result<DirParts, BuildError> {
    let params = SteeringParams::from_settings(cfg)?;
    let deadband = cfg.positive("steer.deadband")?;
    let plant = Arc::new(Mutex::new(SteeringPlant::new(params)));
    let (pos_w, ctrl_r) = pipe();
    let sys_r = pos_w.subscribe();
    let controller = Arc::new(Mutex::new(DirController::new(
        DirSensor::new(plant.clone(), pos_w),
        ctrl_r,
        SteeringDevice::new(plant.clone()),
        deadband,
    )));
    let system = DirSystem::new(controller.clone(), sys_r);
    let inbox = system.inbox();
    Ok(DirParts {
        system,
        plant,
        timeout: DirCtrlTimeOut(controller.clone()),
        controller,
        inbox,
    })
}

pub fn build_pool(mode: PoolMode, wheels: Vec<WheelSystem>, dir: DirSystem) -> SubsystemPool {
    let mut members: Vec<Box<dyn ControlSubsystem>> = Vec::with_capacity(wheels.len() + 1);
    for w in wheels {
        members.push(Box::new(w));
    }
    members.push(Box::new(dir));
    SubsystemPool::new(members, mode)
}

pub fn build_main_controller(
    cfg: &Settings,
    pool: SubsystemPool,
    modes: Vec<Box<dyn Mode>>,
    writer: Option<SerialWriter>,
    timing: Timing,
) -> Result<MainController, BuildError> {
    let n: u8 = cfg.get("fsm.n")?;
    if !(1..=MAX_WAIT_DEPTH).contains(&n) {
        return Err(ConfigError::OutOfRange {
            key: "fsm.n".into(),
            reason: format!("must be in 1..={MAX_WAIT_DEPTH}"),
        }
        .into());
    }
    if modes.is_empty() {
        return Err(ConfigError::OutOfRange {
            key: "modes".into(),
            reason: "at least one reading mode is required".into(),
        }
        .into());
    }
    Ok(MainController::new(modes, n, pool, writer, timing))
}

/// Knobs for [`build_system`] that are not plain configuration values.
pub struct AssemblyOptions {
    pub pool_mode: PoolMode,
    pub timing: Timing,
    /// PC byte input; an in-memory stream is created when absent.
    pub pc_source: Option<Box<dyn ByteSource>>,
    /// Telemetry output; an in-memory stream is created when absent.
    pub telemetry_sink: Option<Box<dyn ByteSink>>,
    pub velocity_factory: Option<VelocitySourceFactory>,
    /// Appended to the mode ring after RC and PC.
    pub extra_modes: Vec<Box<dyn Mode>>,
    pub kernel_trace: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            pool_mode: PoolMode::Sequential,
            timing: Timing::Off,
            pc_source: None,
            telemetry_sink: None,
            velocity_factory: None,
            extra_modes: Vec::new(),
            kernel_trace: false,
        }
    }
}

/// A command family bound in the kernel or exposed as a command queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandFamily {
    pub name: &'static str,
    pub trigger: String,
    pub handlers: usize,
}

/// Everything [`build_system`] produces.
pub struct SystemAssembly {
    pub kernel: Kernel,
    pub controller: SharedMainController,
    pub metrics: MetricsLog,
    pub wheel_plants: Vec<SharedWheelPlant>,
    pub steering_plant: SharedSteeringPlant,
    pub dir_controller: SharedDirController,
    pub wheel_inboxes: Vec<WheelInbox>,
    pub steering_inbox: SteeringInbox,
    /// In-memory PC input, when no external source was supplied.
    pub pc_input: Option<MemoryStream>,
    /// In-memory telemetry output, when no external sink was supplied.
    pub telemetry: Option<MemoryStream>,
    pub link: SharedLink,
    pub rc_buffers: SharedRcBuffers,
    pub settings: Settings,
    pub cycle: SimDuration,
    families: Vec<CommandFamily>,
}

impl SystemAssembly {
    pub fn command_families(&self) -> &[CommandFamily] {
        &self.families
    }

    /// Time at which control cycle `k` (0-based) starts.
    pub fn cycle_start(&self, k: u64) -> SimTime {
        SimTime::ZERO + SimDuration::from_micros(self.cycle.as_micros() * (k + 1))
    }

    /// Runs the kernel through the next control tick.
    pub fn run_cycle(&mut self) -> Result<(), KernelError> {
        let k = self.controller.lock().cycles();
        let t = self.cycle_start(k);
        self.kernel.advance_until(t)
    }
}

/// Builds the complete system: four wheel systems, the steering system,
/// the pool, RC and PC modes, and the kernel with all timers and interrupts.
pub fn build_system(cfg: &Settings, mut opts: AssemblyOptions) -> Result<SystemAssembly, BuildError> {
    let cycle = millis(cfg, "timing.cycle_ms")?;
    let sub = millis(cfg, "timing.sub_ms")?;
    let min_w: u32 = cfg.get("rc.min_width_us")?;
    let max_w: u32 = cfg.get("rc.max_width_us")?;
    if min_w >= max_w {
        return Err(ConfigError::OutOfRange {
            key: "rc.max_width_us".into(),
            reason: "must exceed rc.min_width_us".into(),
        }
        .into());
    }
    let stale = millis(cfg, "rc.stale_ms")?;
    let threshold: u32 = cfg.get("serial.sync_threshold")?;
    let backlog: usize = cfg.get("serial.tx_backlog")?;
    if threshold == 0 {
        return Err(ConfigError::OutOfRange {
            key: "serial.sync_threshold".into(),
            reason: "must be > 0".into(),
        }
        .into());
    }
    let max_rpm = cfg.positive("plant.kv")? * cfg.positive("plant.max_tension")?;
    let max_steer = cfg.positive("plant.steer_limit")?;

    let mut kernel = Kernel::new();
    if opts.kernel_trace {
        kernel.enable_trace();
    }

    let mut wheels = Vec::with_capacity(WHEEL_COUNT);
    let mut plants = Vec::with_capacity(WHEEL_COUNT);
    let mut current_sensors = Vec::with_capacity(WHEEL_COUNT);
    let mut inboxes = Vec::with_capacity(WHEEL_COUNT);
    for i in 0..WHEEL_COUNT {
        let parts = build_wheel_system(cfg, i, opts.velocity_factory.as_mut())?;
        kernel.register_interrupt(hall_irq(i), Box::new(parts.hall))?;
        wheels.push(parts.system);
        plants.push(parts.plant);
        current_sensors.push(parts.current_sensor);
        inboxes.push(parts.inbox);
    }
    let dir = build_dir_system(cfg)?;

    let rc_buffers = Arc::new(Mutex::new(RcBuffers::new(min_w, max_w)));
    kernel.register_interrupt(
        RC_VELOCITY_IRQ,
        Box::new(RcPinCommand::new(rc_buffers.clone(), RcChannel::Velocity)),
    )?;
    kernel.register_interrupt(
        RC_DIRECTION_IRQ,
        Box::new(RcPinCommand::new(rc_buffers.clone(), RcChannel::Direction)),
    )?;

    let link: SharedLink = Arc::new(Mutex::new(SerialLink::new(threshold)));
    let (pc_source, pc_input): (Box<dyn ByteSource>, _) = match opts.pc_source.take() {
        Some(s) => (s, None),
        None => {
            let s = MemoryStream::new();
            (Box::new(s.clone()), Some(s))
        }
    };
    let (sink, telemetry): (Box<dyn ByteSink>, _) = match opts.telemetry_sink.take() {
        Some(s) => (s, None),
        None => {
            let s = MemoryStream::new();
            (Box::new(s.clone()), Some(s))
        }
    };
    let writer = SerialWriter::new(sink, link.clone(), backlog);

    let mut modes: Vec<Box<dyn Mode>> = vec![
        Box::new(RcMode::new(
            rc_buffers.clone(),
            stale,
            Box::new(StandardRc { max_rpm, max_steer }),
        )),
        Box::new(PcMode::new(pc_source, link.clone())),
    ];
    modes.append(&mut opts.extra_modes);

    let pool = build_pool(opts.pool_mode, wheels, dir.system);
    let controller = Arc::new(Mutex::new(build_main_controller(
        cfg,
        pool,
        modes,
        Some(writer),
        opts.timing,
    )?));
    let metrics: MetricsLog = Arc::default();

    // Registration order fixes dispatch order at equal times: sensors and
    // steering sub-step first, then physics, then the control cycle.
    let mut second = CommandList::new();
    second.push(Box::new(dir.timeout));
    second.push(Box::new(ReadCnt {
        sensors: current_sensors,
    }));
    kernel.schedule_periodic(sub, Box::new(second))?;
    kernel.schedule_periodic(
        sub,
        Box::new(PhysicsCommand {
            dt: sub,
            wheels: plants
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, p)| (p, hall_irq(i)))
                .collect(),
            steering: dir.plant.clone(),
        }),
    )?;
    kernel.schedule_periodic(
        cycle,
        Box::new(ControllerTimeOut {
            controller: controller.clone(),
            log: metrics.clone(),
        }),
    )?;

    let families = vec![
        CommandFamily {
            name: "main-timer",
            trigger: format!("timer {} us", cycle.as_micros()),
            handlers: 1,
        },
        CommandFamily {
            name: "steering-timer",
            trigger: format!("timer {} us", sub.as_micros()),
            handlers: 1,
        },
        CommandFamily {
            name: "wheel-timer",
            trigger: format!("timer {} us", sub.as_micros()),
            handlers: WHEEL_COUNT,
        },
        CommandFamily {
            name: "hall-sensor",
            trigger: format!("irq {}..{}", hall_irq(0), hall_irq(WHEEL_COUNT - 1)),
            handlers: WHEEL_COUNT,
        },
        CommandFamily {
            name: "rc-pin",
            trigger: format!("irq {} and {}", RC_VELOCITY_IRQ, RC_DIRECTION_IRQ),
            handlers: 2,
        },
        CommandFamily {
            name: "wheel-behaviour",
            trigger: "wheel command queue".into(),
            handlers: WHEEL_COUNT,
        },
        CommandFamily {
            name: "steering-behaviour",
            trigger: "steering command queue".into(),
            handlers: 1,
        },
    ];

    Ok(SystemAssembly {
        kernel,
        controller,
        metrics,
        wheel_plants: plants,
        steering_plant: dir.plant,
        dir_controller: dir.controller,
        wheel_inboxes: inboxes,
        steering_inbox: dir.inbox,
        pc_input,
        telemetry,
        link,
        rc_buffers,
        settings: cfg.clone(),
        cycle,
        families,
    })
}
