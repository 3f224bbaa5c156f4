//! Simulated physical process and its actuator facades.
//!
//! Wheels are first-order velocity systems driven by tension with a
//! resistive current model; the steering device is a slew-limited stepper.
//! [`Wheel`] and [`SteeringDevice`] are the only way controllers touch the
//! process; [`PhysicsCommand`] advances it on the kernel's time line and
//! emits Hall edges as interrupts.

use std::sync::Arc;

use parking_lot::Mutex;

use crate::config::{ConfigError, Settings};
use crate::kernel::{CommandContext, ControlCommand, InterruptId, SimDuration, SimTime};

/// Interrupt data word for a Hall edge produced while turning backwards.
pub const HALL_REVERSE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelParams {
    /// Velocity constant, rpm per volt.
    pub kv: f64,
    /// Mechanical time constant, seconds.
    pub tau: f64,
    /// Winding resistance, ohms.
    pub resistance: f64,
    /// Driver tension limit, volts.
    pub max_tension: f64,
    pub pulses_per_rev: u32,
}

impl Default for WheelParams {
    fn default() -> Self {
        Self {
            kv: 12.5,
            tau: 0.5,
            resistance: 0.5,
            max_tension: 24.0,
            pulses_per_rev: 24,
        }
    }
}

impl WheelParams {
    pub fn from_settings(cfg: &Settings) -> Result<Self, ConfigError> {
        let pulses_per_rev: u32 = cfg.get("plant.pulses_per_rev")?;
        if pulses_per_rev == 0 {
            return Err(ConfigError::OutOfRange {
                key: "plant.pulses_per_rev".into(),
                reason: "must be > 0".into(),
            });
        }
        Ok(Self {
            kv: cfg.positive("plant.kv")?,
            tau: cfg.positive("plant.tau")?,
            resistance: cfg.positive("plant.r")?,
            max_tension: cfg.positive("plant.max_tension")?,
            pulses_per_rev,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelPlantState {
    /// Angular velocity, rpm.
    pub omega: f64,
    /// Tension currently applied by the driver, volts.
    pub applied_tension: f64,
    /// Sign of rotation: -1, 0 or 1.
    pub direction: i8,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Exact zero-order-hold step of the first-order velocity model.
pub fn step_wheel(state: &WheelPlantState, tension: f64, dt: f64, p: &WheelParams) -> WheelPlantState {
    debug_assert!(dt > 0.0);
    let v = tension.clamp(-p.max_tension, p.max_tension);
    let alpha = (-dt / p.tau).exp();
    let omega = alpha * state.omega + (1.0 - alpha) * p.kv * v;
    WheelPlantState {
        omega,
        applied_tension: v,
        direction: sign(omega),
    }
}

/// Mean velocity over a step from `omega0` under constant tension.
fn mean_omega(omega0: f64, tension: f64, dt: f64, p: &WheelParams) -> f64 {
    let steady = p.kv * tension;
    let alpha = (-dt / p.tau).exp();
    steady + (omega0 - steady) * (p.tau / dt) * (1.0 - alpha)
}

/// Winding current in mA, before any sensor clipping.
pub fn wheel_current(state: &WheelPlantState, p: &WheelParams) -> f64 {
    (state.applied_tension - state.omega / p.kv) / p.resistance * 1000.0
}

/// Hall edges produced over one interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HallEdges {
    pub count: u32,
    pub reverse: bool,
    /// Evenly spaced over the interval; the last edge lands on its end.
    pub times: Vec<SimTime>,
}

fn spread(count: u32, start: SimTime, dt: SimDuration) -> Vec<SimTime> {
    let span = dt.as_micros();
    (1..=count as u64)
        .map(|k| start + SimDuration::from_micros(k * span / count as u64))
        .collect()
}

/// Edges over `dt` at constant velocity: round(|ω|·P·dt/60).
pub fn emit_hall_edges(state: &WheelPlantState, dt: SimDuration, start: SimTime, pulses_per_rev: u32) -> HallEdges {
    let exact = state.omega.abs() * pulses_per_rev as f64 * dt.as_secs_f64() / 60.0;
    let count = exact.round() as u32;
    HallEdges {
        count,
        reverse: state.omega < 0.0,
        times: spread(count, start, dt),
    }
}

/// Edge generator that carries the fractional pulse between intervals, so
/// short sub-steps still add up to the right count over a sampling window.
#[derive(Debug, Clone, Copy, Default)]
pub struct HallEncoder {
    carry: f64,
}

impl HallEncoder {
    pub fn advance(&mut self, mean_omega: f64, dt: SimDuration, start: SimTime, pulses_per_rev: u32) -> HallEdges {
        let total = self.carry + mean_omega * pulses_per_rev as f64 * dt.as_secs_f64() / 60.0;
        let whole = total.round();
        self.carry = total - whole;
        let count = whole.abs() as u32;
        HallEdges {
            count,
            reverse: whole < 0.0,
            times: spread(count, start, dt),
        }
    }
}

/// One simulated wheel: motor, driver and Hall sensor.
#[derive(Debug, Clone)]
pub struct WheelPlant {
    pub params: WheelParams,
    state: WheelPlantState,
    commanded: f64,
    encoder: HallEncoder,
}

impl WheelPlant {
    pub fn new(params: WheelParams) -> Self {
        Self {
            params,
            state: WheelPlantState::default(),
            commanded: 0.0,
            encoder: HallEncoder::default(),
        }
    }

    pub fn state(&self) -> WheelPlantState {
        self.state
    }

    pub fn set_state(&mut self, state: WheelPlantState) {
        self.state = state;
        self.commanded = state.applied_tension;
    }

    /// Latches a driver tension; clamped to the driver limit.
    pub fn apply_tension(&mut self, volts: f64) -> f64 {
        self.commanded = volts.clamp(-self.params.max_tension, self.params.max_tension);
        self.state.applied_tension = self.commanded;
        self.commanded
    }

    pub fn current_ma(&self) -> f64 {
        wheel_current(&self.state, &self.params)
    }

    /// Integrates over `[start, start + dt]` and returns the Hall edges of that span.
    pub fn advance(&mut self, start: SimTime, dt: SimDuration) -> HallEdges {
        let secs = dt.as_secs_f64();
        let mean = mean_omega(self.state.omega, self.commanded, secs, &self.params);
        self.state = step_wheel(&self.state, self.commanded, secs, &self.params);
        self.encoder.advance(mean, dt, start, self.params.pulses_per_rev)
    }
}

pub type SharedWheelPlant = Arc<Mutex<WheelPlant>>;

/// Actuator facade for a wheel driver.
#[derive(Debug, Clone)]
pub struct Wheel {
    plant: SharedWheelPlant,
}

impl Wheel {
    pub fn new(plant: SharedWheelPlant) -> Self {
        Self { plant }
    }

    /// Sets the driver tension; returns what was actually applied.
    pub fn apply_tension(&self, volts: f64) -> f64 {
        self.plant.lock().apply_tension(volts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringParams {
    /// Maximum angular speed, degrees per second.
    pub slew: f64,
    /// Mechanical end stop, degrees either side of centre.
    pub limit: f64,
}

impl Default for SteeringParams {
    fn default() -> Self {
        Self {
            slew: 60.0,
            limit: 30.0,
        }
    }
}

impl SteeringParams {
    pub fn from_settings(cfg: &Settings) -> Result<Self, ConfigError> {
        Ok(Self {
            slew: cfg.positive("plant.slew")?,
            limit: cfg.positive("plant.steer_limit")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteeringPlantState {
    pub position: f64,
    pub target: f64,
    pub enabled: bool,
}

/// Moves toward the target by at most `slew·dt`, never past it or the end stops.
pub fn step_steering(state: &SteeringPlantState, dt: f64, p: &SteeringParams) -> SteeringPlantState {
    debug_assert!(dt > 0.0);
    if !state.enabled {
        return *state;
    }
    let target = state.target.clamp(-p.limit, p.limit);
    let max_move = p.slew * dt;
    let delta = (target - state.position).clamp(-max_move, max_move);
    SteeringPlantState {
        position: (state.position + delta).clamp(-p.limit, p.limit),
        ..*state
    }
}

#[derive(Debug, Clone)]
pub struct SteeringPlant {
    pub params: SteeringParams,
    state: SteeringPlantState,
}

impl SteeringPlant {
    pub fn new(params: SteeringParams) -> Self {
        Self {
            params,
            state: SteeringPlantState::default(),
        }
    }

    pub fn state(&self) -> SteeringPlantState {
        self.state
    }

    pub fn set_state(&mut self, state: SteeringPlantState) {
        self.state = state;
    }

    pub fn advance(&mut self, dt: SimDuration) {
        self.state = step_steering(&self.state, dt.as_secs_f64(), &self.params);
    }
}

pub type SharedSteeringPlant = Arc<Mutex<SteeringPlant>>;

/// Actuator facade for the steering stepper driver.
#[derive(Debug, Clone)]
pub struct SteeringDevice {
    plant: SharedSteeringPlant,
}

impl SteeringDevice {
    pub fn new(plant: SharedSteeringPlant) -> Self {
        Self { plant }
    }

    /// Drives toward `target`; `direction` is the sign the controller chose.
    pub fn drive_toward(&self, target: f64, direction: i8) {
        debug_assert!(direction != 0);
        let mut plant = self.plant.lock();
        let mut s = plant.state();
        s.target = target;
        s.enabled = true;
        plant.set_state(s);
    }

    pub fn set_enabled(&self, on: bool) {
        let mut plant = self.plant.lock();
        let mut s = plant.state();
        s.enabled = on;
        if !on {
            s.target = s.position;
        }
        plant.set_state(s);
    }
}

/// Advances every plant by one sub-step and raises the resulting Hall edges.
pub struct PhysicsCommand {
    pub dt: SimDuration,
    pub wheels: Vec<(SharedWheelPlant, InterruptId)>,
    pub steering: SharedSteeringPlant,
}

impl ControlCommand for PhysicsCommand {
    fn execute(&mut self, ctx: &mut CommandContext<'_>) {
        let now = ctx.now();
        for (plant, irq) in &self.wheels {
            let edges = plant.lock().advance(now, self.dt);
            let data = if edges.reverse { HALL_REVERSE } else { 0 };
            for t in edges.times {
                ctx.raise(*irq, t, data);
            }
        }
        self.steering.lock().advance(self.dt);
    }
}
