//! Drives a built system through a scenario, one control cycle at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::csv::RcEdge;
use super::{InjectSource, Scenario, SteerSpec};
use crate::config::{ConfigError, Settings};
use crate::control::builder::{RC_DIRECTION_IRQ, RC_VELOCITY_IRQ};
use crate::control::VelocitySourceFactory;
use crate::control::{build_system, AssemblyOptions, BuildError, CycleMetrics, PoolMode, SystemAssembly, Timing};
use crate::io::rc::{LEVEL_FALL, LEVEL_RISE, NEUTRAL_WIDTH_US};
use crate::io::{ByteSink, FrameReplay, Mode, RcChannel};
use crate::kernel::{KernelError, SimTime};
use crate::messages::{encode_message, Order, Source, WHEEL_COUNT};

/// RC frame period: one pulse per channel every 20 ms.
const RC_FRAME_US: u64 = 20_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("set-point at cycle {cycle} cannot be encoded: {reason}")]
    Encode { cycle: u64, reason: String },
    #[error("control cycle {0} produced no metrics")]
    MissingCycle(u64),
}

pub struct RunOptions {
    pub mode: PoolMode,
    pub seed: u64,
    pub timing: Timing,
    /// Overrides the scenario's injection path.
    pub source: Option<InjectSource>,
    /// Recorded PC bytes replayed one frame per poll instead of the schedule.
    pub pc_replay: Option<Vec<u8>>,
    /// Recorded RC edges raised instead of the schedule.
    pub rc_trace: Option<Vec<RcEdge>>,
    pub telemetry_sink: Option<Box<dyn ByteSink>>,
    pub velocity_factory: Option<VelocitySourceFactory>,
    pub extra_modes: Vec<Box<dyn Mode>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: PoolMode::Sequential,
            seed: 0,
            timing: Timing::Off,
            source: None,
            pc_replay: None,
            rc_trace: None,
            telemetry_sink: None,
            velocity_factory: None,
            extra_modes: Vec::new(),
        }
    }
}

/// Table-shaped summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub description: String,
    pub cycles: u64,
    pub avg_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub violations: u64,
    pub faults: u64,
    /// No cycles were run; averages are reported as 0.
    pub empty: bool,
}

impl Summary {
    pub fn from_metrics(scenario: &Scenario, metrics: &[CycleMetrics]) -> Self {
        let budget_us = scenario.cycle_budget_ms * 1000.0;
        let total: u64 = metrics.iter().map(|m| m.compute_us).sum();
        let max = metrics.iter().map(|m| m.compute_us).max().unwrap_or(0);
        Self {
            scenario: scenario.id.clone(),
            description: scenario.description.clone(),
            cycles: metrics.len() as u64,
            avg_ms: if metrics.is_empty() {
                0.0
            } else {
                total as f64 / metrics.len() as f64 / 1000.0
            },
            max_ms: max as f64 / 1000.0,
            budget_ms: scenario.cycle_budget_ms,
            violations: metrics.iter().filter(|m| m.compute_us as f64 > budget_us).count() as u64,
            faults: metrics.iter().filter(|m| m.fault).count() as u64,
            empty: metrics.is_empty(),
        }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0 && self.faults == 0
    }
}

pub struct RunReport {
    pub metrics: Vec<CycleMetrics>,
    pub summary: Summary,
}

enum Feed {
    Schedule(InjectSource),
    Replay,
}

pub struct Runner {
    scenario: Scenario,
    assembly: SystemAssembly,
    feed: Feed,
    rc_phase: [u64; 2],
    rc_injected: Vec<RcEdge>,
    steer_target: Option<f64>,
    last: Option<CycleMetrics>,
    deadband: f64,
    max_rpm: f64,
    max_steer: f64,
    cycle: u64,
}

impl Runner {
    /// Builds the system from `base` with the scenario's overrides on top.
    pub fn new(scenario: &Scenario, base: &Settings, mut opts: RunOptions) -> Result<Self, RunError> {
        let mut settings = base.clone();
        for (k, v) in scenario.overrides.iter() {
            settings.set(k, v);
        }
        let deadband = settings.positive("steer.deadband")?;
        let max_rpm = settings.positive("plant.kv")? * settings.positive("plant.max_tension")?;
        let max_steer = settings.positive("plant.steer_limit")?;

        let replaying = opts.pc_replay.is_some() || opts.rc_trace.is_some();
        let assembly = build_system(
            &settings,
            AssemblyOptions {
                pool_mode: opts.mode,
                timing: opts.timing,
                pc_source: opts
                    .pc_replay
                    .take()
                    .map(|b| Box::new(FrameReplay::new(&b)) as Box<dyn crate::io::ByteSource>),
                telemetry_sink: opts.telemetry_sink.take(),
                velocity_factory: opts.velocity_factory.take(),
                extra_modes: std::mem::take(&mut opts.extra_modes),
                kernel_trace: false,
            },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let max_phase = RC_FRAME_US - 2_100;
        let rc_phase = [rng.gen_range(0..max_phase), rng.gen_range(0..max_phase)];
        let mut runner = Self {
            scenario: scenario.clone(),
            assembly,
            feed: if replaying {
                Feed::Replay
            } else {
                Feed::Schedule(opts.source.unwrap_or(scenario.source))
            },
            rc_phase,
            rc_injected: Vec::new(),
            steer_target: None,
            last: None,
            deadband,
            max_rpm,
            max_steer,
            cycle: 0,
        };
        if let Some(edges) = opts.rc_trace {
            for e in edges {
                runner.raise_rc(e)?;
            }
        }
        Ok(runner)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn assembly(&self) -> &SystemAssembly {
        &self.assembly
    }

    pub fn assembly_mut(&mut self) -> &mut SystemAssembly {
        &mut self.assembly
    }

    /// Cycles completed so far.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn done(&self) -> bool {
        self.cycle >= self.scenario.cycle_count
    }

    /// RC edges generated from the schedule so far.
    pub fn rc_edges(&self) -> &[RcEdge] {
        &self.rc_injected
    }

    fn raise_rc(&mut self, e: RcEdge) -> Result<(), KernelError> {
        let irq = match e.channel {
            RcChannel::Velocity => RC_VELOCITY_IRQ,
            RcChannel::Direction => RC_DIRECTION_IRQ,
        };
        let level = if e.rising { LEVEL_RISE } else { LEVEL_FALL };
        self.assembly.kernel.raise_interrupt_with(irq, e.at, level)
    }

    /// Steering set-point for the coming cycle.
    fn steering_for(&mut self, spec: SteerSpec) -> f64 {
        match spec {
            SteerSpec::Fixed(d) => {
                self.steer_target = None;
                d
            }
            SteerSpec::Sweep { extreme } => {
                let target = match (self.steer_target, self.last) {
                    (None, _) => extreme,
                    (Some(t), Some(m)) if (m.steer_deg - t).abs() <= self.deadband => -t,
                    (Some(t), _) => t,
                };
                self.steer_target = Some(target);
                target
            }
        }
    }

    fn width_for(value: f64, full_scale: f64) -> u32 {
        let pct = (value / full_scale * 100.0).clamp(-100.0, 100.0);
        (NEUTRAL_WIDTH_US as f64 + pct * 5.0).round() as u32
    }

    fn inject(&mut self, source: InjectSource, rpm: f64, steer: f64) -> Result<(), RunError> {
        match source {
            InjectSource::Pc => {
                let order = Order::velocity([rpm; WHEEL_COUNT], steer, Source::Pc);
                let frame = encode_message(&order.into()).map_err(|e| RunError::Encode {
                    cycle: self.cycle,
                    reason: e.to_string(),
                })?;
                if let Some(pc) = &self.assembly.pc_input {
                    pc.push(&frame);
                }
            }
            InjectSource::Rc => {
                let start = self.assembly.kernel.now().as_micros();
                let end = self.assembly.cycle_start(self.cycle).as_micros();
                let widths = [
                    (RcChannel::Velocity, Self::width_for(rpm, self.max_rpm)),
                    (RcChannel::Direction, Self::width_for(steer, self.max_steer)),
                ];
                for (i, (channel, width)) in widths.into_iter().enumerate() {
                    let phase = self.rc_phase[i];
                    // First frame slot whose rise lands in [start, end).
                    let mut rise = if start <= phase {
                        phase
                    } else {
                        phase + (start - phase).div_ceil(RC_FRAME_US) * RC_FRAME_US
                    };
                    while rise < end {
                        for (at, rising) in [(rise, true), (rise + width as u64, false)] {
                            let e = RcEdge {
                                at: SimTime::from_micros(at),
                                channel,
                                rising,
                            };
                            self.raise_rc(e)?;
                            self.rc_injected.push(e);
                        }
                        rise += RC_FRAME_US;
                    }
                }
            }
        }
        Ok(())
    }

    /// Injects the next cycle's set-points and runs that cycle.
    pub fn step(&mut self) -> Result<CycleMetrics, RunError> {
        if let Feed::Schedule(source) = self.feed {
            let step = self.scenario.step_at(self.cycle);
            let steer = self.steering_for(step.steer);
            self.inject(source, step.rpm, steer)?;
        }
        let before = self.assembly.metrics.lock().len();
        self.assembly.run_cycle()?;
        let log = self.assembly.metrics.lock();
        if log.len() != before + 1 {
            return Err(RunError::MissingCycle(self.cycle));
        }
        let m = *log.last().expect("just checked");
        drop(log);
        self.last = Some(m);
        self.cycle += 1;
        Ok(m)
    }

    /// Runs the remaining cycles of the scenario.
    pub fn run(mut self) -> Result<RunReport, RunError> {
        let mut metrics = Vec::with_capacity(self.scenario.cycle_count.saturating_sub(self.cycle) as usize);
        while !self.done() {
            metrics.push(self.step()?);
        }
        let summary = Summary::from_metrics(&self.scenario, &metrics);
        Ok(RunReport { metrics, summary })
    }
}

/// Convenience: run `scenario` with default settings.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<RunReport, RunError> {
    Runner::new(scenario, &Settings::with_defaults(), opts)?.run()
}
