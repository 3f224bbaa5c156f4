//! Operation and reading-mode state machines of the main controller.

use std::fmt;

use crate::messages::{Order, Source};

/// Largest supported waiting depth.
pub const MAX_WAIT_DEPTH: u8 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpState {
    Working,
    /// Silent cycles so far, 1..=N.
    Waiting(u8),
    Reconnecting,
}

impl OpState {
    /// Wire code: 0 working, i for waiting i, 127 reconnecting.
    pub fn code(self) -> u8 {
        match self {
            OpState::Working => 0,
            OpState::Waiting(i) => i,
            OpState::Reconnecting => 127,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OpState::Working),
            1..=MAX_WAIT_DEPTH => Some(OpState::Waiting(code)),
            127 => Some(OpState::Reconnecting),
            _ => None,
        }
    }

    pub fn label(self) -> String {
        self.to_string()
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        match s {
            "working" => Some(OpState::Working),
            "reconnecting" => Some(OpState::Reconnecting),
            _ => {
                let i: u8 = s.strip_prefix("waiting")?.parse().ok()?;
                (1..=MAX_WAIT_DEPTH).contains(&i).then_some(OpState::Waiting(i))
            }
        }
    }
}

impl fmt::Display for OpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpState::Working => f.write_str("working"),
            OpState::Waiting(i) => write!(f, "waiting{i}"),
            OpState::Reconnecting => f.write_str("reconnecting"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    ReadNew,
    UsePrevious,
}

/// Main controller state. `mode` is a position in the mode ring, not an id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtrlState {
    pub op: OpState,
    pub mode: usize,
    pub last_order: Order,
    pub n: u8,
    pub mode_count: usize,
}

impl CtrlState {
    /// Working, first mode in the ring, stop as the standing order.
    pub fn initial(n: u8, mode_count: usize) -> Self {
        assert!((1..=MAX_WAIT_DEPTH).contains(&n), "wait depth out of range");
        assert!(mode_count >= 1, "need at least one reading mode");
        Self {
            op: OpState::Working,
            mode: 0,
            last_order: Order::stop(Source::Rc),
            n,
            mode_count,
        }
    }
}

/// One cycle of both machines. The mode guard looks at the operation state
/// the cycle started in.
pub fn fsm_step(s: &CtrlState, available: bool) -> (CtrlState, Action) {
    let mut next = *s;
    if available {
        next.op = OpState::Working;
        return (next, Action::ReadNew);
    }
    next.op = match s.op {
        OpState::Working => OpState::Waiting(1),
        OpState::Waiting(i) if i < s.n => OpState::Waiting(i + 1),
        OpState::Waiting(_) | OpState::Reconnecting => OpState::Reconnecting,
    };
    if s.op == OpState::Reconnecting {
        next.mode = (s.mode + 1) % s.mode_count;
    }
    (next, Action::UsePrevious)
}
