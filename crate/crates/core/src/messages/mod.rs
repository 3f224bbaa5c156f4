//! Orders, telemetry and the framed wire codec spoken between MCU and PC.

mod codec;
mod crc;

pub use codec::{
    encode_frame, encode_message, CodecError, FrameDecoder, ESCAPE, ESCAPE_XOR, FLAG, MSG_SETPOINT, MSG_STOP,
    MSG_TELEMETRY,
};
pub use crc::crc8;

/// Wheels driven by the controller.
pub const WHEEL_COUNT: usize = 4;

pub const MAX_VELOCITY_RPM: f64 = 300.0;
pub const MAX_TENSION_V: f64 = 24.0;
pub const MAX_CURRENT_MA: f64 = 5000.0;
pub const MAX_STEERING_DEG: f64 = 30.0;

/// Which quantity a setpoint order regulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SetpointKind {
    /// Wheel velocity in rpm.
    Velocity,
    /// Wheel tension in volts.
    Tension,
    /// Wheel current in milliamps.
    Current,
}

impl SetpointKind {
    pub const ALL: [SetpointKind; 3] = [Self::Velocity, Self::Tension, Self::Current];

    pub fn wire_code(self) -> u8 {
        match self {
            Self::Velocity => 0,
            Self::Tension => 1,
            Self::Current => 2,
        }
    }

    pub fn from_wire(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Velocity),
            1 => Some(Self::Tension),
            2 => Some(Self::Current),
            _ => None,
        }
    }

    /// Largest accepted magnitude for a wheel setpoint of this kind.
    pub fn limit(self) -> f64 {
        match self {
            Self::Velocity => MAX_VELOCITY_RPM,
            Self::Tension => MAX_TENSION_V,
            Self::Current => MAX_CURRENT_MA,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::Velocity => "rpm",
            Self::Tension => "V",
            Self::Current => "mA",
        }
    }
}

/// Where an order came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Rc,
    Pc,
}

/// A decoded command: wheel and steering set-points, or a stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Setpoint {
        kind: SetpointKind,
        /// One value per wheel, in the unit of `kind`.
        wheels: [f64; WHEEL_COUNT],
        /// Steering angle in degrees.
        steering: f64,
        source: Source,
    },
    Stop {
        source: Source,
    },
}

impl Order {
    pub fn stop(source: Source) -> Self {
        Order::Stop { source }
    }

    pub fn velocity(rpm: [f64; WHEEL_COUNT], steering: f64, source: Source) -> Self {
        Order::Setpoint {
            kind: SetpointKind::Velocity,
            wheels: rpm,
            steering,
            source,
        }
    }

    pub fn source(&self) -> Source {
        match *self {
            Order::Setpoint { source, .. } | Order::Stop { source } => source,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Order::Stop { .. })
    }

    /// Wheel set-point `i`; zero for a stop.
    pub fn wheel(&self, i: usize) -> f64 {
        match self {
            Order::Setpoint { wheels, .. } => wheels[i],
            Order::Stop { .. } => 0.0,
        }
    }

    /// Steering set-point; zero for a stop.
    pub fn steering(&self) -> f64 {
        match self {
            Order::Setpoint { steering, .. } => *steering,
            Order::Stop { .. } => 0.0,
        }
    }

    pub fn kind(&self) -> Option<SetpointKind> {
        match self {
            Order::Setpoint { kind, .. } => Some(*kind),
            Order::Stop { .. } => None,
        }
    }

    /// Checks the physical range of every set-point.
    pub fn validate(&self) -> Result<(), CodecError> {
        if let Order::Setpoint {
            kind, wheels, steering, ..
        } = self
        {
            for (i, &w) in wheels.iter().enumerate() {
                check_range(WHEEL_FIELDS[i], w, kind.limit())?;
            }
            check_range("steering", *steering, MAX_STEERING_DEG)?;
        }
        Ok(())
    }
}

const WHEEL_FIELDS: [&str; WHEEL_COUNT] = ["wheel0", "wheel1", "wheel2", "wheel3"];

fn check_range(field: &'static str, value: f64, limit: f64) -> Result<(), CodecError> {
    if value.is_finite() && value.abs() <= limit {
        Ok(())
    } else {
        Err(CodecError::Range { field, value })
    }
}

/// Measurements and bookkeeping reported to the PC once per control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Telemetry {
    /// Cycle index, wrapping at 2^16 on the wire.
    pub cycle: u16,
    /// Measured wheel velocities, rpm.
    pub velocity: [f64; WHEEL_COUNT],
    /// Measured wheel currents, mA.
    pub current: [f64; WHEEL_COUNT],
    /// Measured steering position, degrees.
    pub position: f64,
    /// Compute time of the cycle so far, microseconds (saturating).
    pub compute_us: u16,
    /// Operation-state code, see `control::OpState::code`. Must be < 128.
    pub op_state: u8,
    /// Reading-mode id (0 = RC, 1 = PC).
    pub mode: u8,
    /// Set when the cycle's control phase was aborted.
    pub fault: bool,
}

/// Anything that travels inside a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    Order(Order),
    Telemetry(Telemetry),
}

impl From<Order> for Message {
    fn from(o: Order) -> Self {
        Message::Order(o)
    }
}

impl From<Telemetry> for Message {
    fn from(t: Telemetry) -> Self {
        Message::Telemetry(t)
    }
}
