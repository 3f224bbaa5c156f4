//! Control algorithms computing a wheel tension, selected by set-point kind.

use crate::control::SubsystemError;
use crate::messages::SetpointKind;

/// PI law with output saturation and a clamped integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiState {
    pub kp: f64,
    pub ki: f64,
    pub integral: f64,
    pub output_limit: f64,
}

impl PiState {
    pub fn new(kp: f64, ki: f64, output_limit: f64) -> Self {
        Self {
            kp,
            ki,
            integral: 0.0,
            output_limit,
        }
    }

    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        self.integral += error * dt;
        if self.ki != 0.0 {
            let bound = self.output_limit / self.ki.abs();
            self.integral = self.integral.clamp(-bound, bound);
        }
        (self.kp * error + self.ki * self.integral).clamp(-self.output_limit, self.output_limit)
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }
}

/// Latest measurements available to an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    /// rpm
    pub velocity: f64,
    /// mA
    pub current: f64,
}

pub trait ControlAlgorithm: Send {
    fn kind(&self) -> SetpointKind;
    fn compute(&mut self, setpoint: f64, m: &Measurements, dt: f64) -> f64;
    fn reset(&mut self);
}

#[derive(Debug, Clone)]
pub struct VelocityPi(pub PiState);

impl ControlAlgorithm for VelocityPi {
    fn kind(&self) -> SetpointKind {
        SetpointKind::Velocity
    }

    fn compute(&mut self, setpoint: f64, m: &Measurements, dt: f64) -> f64 {
        self.0.step(setpoint - m.velocity, dt)
    }

    fn reset(&mut self) {
        self.0.reset();
    }
}

#[derive(Debug, Clone)]
pub struct CurrentPi(pub PiState);

impl ControlAlgorithm for CurrentPi {
    fn kind(&self) -> SetpointKind {
        SetpointKind::Current
    }

    fn compute(&mut self, setpoint: f64, m: &Measurements, dt: f64) -> f64 {
        self.0.step(setpoint - m.current, dt)
    }

    fn reset(&mut self) {
        self.0.reset();
    }
}

#[derive(Debug, Clone)]
pub struct TensionPassthrough {
    pub limit: f64,
}

impl ControlAlgorithm for TensionPassthrough {
    fn kind(&self) -> SetpointKind {
        SetpointKind::Tension
    }

    fn compute(&mut self, setpoint: f64, _m: &Measurements, _dt: f64) -> f64 {
        setpoint.clamp(-self.limit, self.limit)
    }

    fn reset(&mut self) {}
}

/// Algorithms keyed by set-point kind. Switching kind resets the incoming
/// algorithm so it does not start from a stale integral.
#[derive(Default)]
pub struct StrategyTable {
    entries: Vec<Box<dyn ControlAlgorithm>>,
    active: Option<SetpointKind>,
}

impl StrategyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the algorithm for its kind.
    pub fn insert(&mut self, alg: Box<dyn ControlAlgorithm>) {
        let kind = alg.kind();
        self.entries.retain(|e| e.kind() != kind);
        self.entries.push(alg);
    }

    pub fn contains(&self, kind: SetpointKind) -> bool {
        self.entries.iter().any(|e| e.kind() == kind)
    }

    pub fn active(&self) -> Option<SetpointKind> {
        self.active
    }

    pub fn control_step(
        &mut self,
        kind: SetpointKind,
        setpoint: f64,
        m: &Measurements,
        dt: f64,
    ) -> Result<f64, SubsystemError> {
        let switched = self.active != Some(kind);
        let alg = self
            .entries
            .iter_mut()
            .find(|e| e.kind() == kind)
            .ok_or(SubsystemError::StrategyNotFound(kind))?;
        if switched {
            alg.reset();
        }
        self.active = Some(kind);
        Ok(alg.compute(setpoint, m, dt))
    }

    pub fn reset_all(&mut self) {
        for e in &mut self.entries {
            e.reset();
        }
        self.active = None;
    }
}
