//! Test scenarios: set-point schedules, the end-to-end runner and CSV output.

pub mod csv;
pub mod runner;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{parse_lines, ConfigError, Settings};

pub use csv::{parse_csv, parse_rc_trace, write_csv, write_rc_trace, CsvError, RcEdge, CSV_HEADER};
pub use runner::{RunError, RunOptions, RunReport, Runner, Summary};

/// Built-in scenarios run this many cycles unless told otherwise.
pub const DEFAULT_CYCLES: u64 = 1000;
pub const DEFAULT_BUDGET_MS: f64 = 100.0;
/// Steering extreme used by the sweeping scenarios, degrees.
pub const SWEEP_EXTREME: f64 = 30.0;

/// Velocity levels of the staircase scenarios, rpm.
pub const STAIRCASE: [f64; 13] = [
    0.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 250.0, 200.0, 150.0, 100.0, 50.0, 0.0,
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected 1-4 or a file path)")]
    Unknown(String),
    #[error("scenario file: {0}")]
    Config(#[from] ConfigError),
    #[error("scenario file: bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("scenario file defines no set-point steps")]
    NoSteps,
}

/// How a step sets the steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteerSpec {
    Fixed(f64),
    /// Swing between ±`extreme`, flipping once the measured position is
    /// within the deadband of the current target.
    Sweep {
        extreme: f64,
    },
}

/// Set-points in force from `from_cycle` until the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStep {
    pub from_cycle: u64,
    pub rpm: f64,
    pub steer: SteerSpec,
}

/// Which path orders take into the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectSource {
    Pc,
    Rc,
}

impl FromStr for InjectSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pc" => Ok(InjectSource::Pc),
            "rc" => Ok(InjectSource::Rc),
            o => Err(format!("unknown source `{o}` (expected pc or rc)")),
        }
    }
}

impl fmt::Display for InjectSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InjectSource::Pc => "pc",
            InjectSource::Rc => "rc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Builtin(u8),
    File,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub cycle_count: u64,
    pub cycle_budget_ms: f64,
    pub source: InjectSource,
    /// Sorted by `from_cycle`; the first step starts at cycle 0.
    steps: Vec<ScheduleStep>,
    /// Config values the scenario overrides.
    pub overrides: Settings,
    origin: Origin,
}

fn builtin_steps(n: u8, cycles: u64) -> Vec<ScheduleStep> {
    let sweep = SteerSpec::Sweep { extreme: SWEEP_EXTREME };
    let level_steps = |steer: SteerSpec| {
        let dwell = cycles / STAIRCASE.len() as u64;
        STAIRCASE
            .iter()
            .enumerate()
            .map(|(i, &rpm)| ScheduleStep {
                from_cycle: i as u64 * dwell,
                rpm,
                steer,
            })
            .collect::<Vec<_>>()
    };
    match n {
        1 => vec![
            ScheduleStep {
                from_cycle: 0,
                rpm: 0.0,
                steer: SteerSpec::Fixed(0.0),
            },
            ScheduleStep {
                from_cycle: cycles / 2,
                rpm: 50.0,
                steer: SteerSpec::Fixed(0.0),
            },
        ],
        2 => vec![ScheduleStep {
            from_cycle: 0,
            rpm: 50.0,
            steer: sweep,
        }],
        3 => level_steps(SteerSpec::Fixed(0.0)),
        4 => level_steps(sweep),
        _ => unreachable!("checked by caller"),
    }
}

fn builtin_description(n: u8) -> &'static str {
    match n {
        1 => "Wheels held at 0 rpm, then stepped to 50 rpm halfway through",
        2 => "Wheels at 50 rpm while the steering swings between its end stops",
        3 => "Wheel velocity climbs from 0 to 300 rpm in 50 rpm steps and back down",
        _ => "Velocity staircase of scenario 3 with the steering swing of scenario 2",
    }
}

fn normalize(mut steps: Vec<ScheduleStep>) -> Vec<ScheduleStep> {
    steps.sort_by_key(|s| s.from_cycle);
    // Later definitions for the same cycle win.
    let mut out: Vec<ScheduleStep> = Vec::with_capacity(steps.len());
    for s in steps {
        match out.last_mut() {
            Some(last) if last.from_cycle == s.from_cycle => *last = s,
            _ => out.push(s),
        }
    }
    if out.first().is_some_and(|s| s.from_cycle != 0) {
        out.insert(
            0,
            ScheduleStep {
                from_cycle: 0,
                rpm: 0.0,
                steer: SteerSpec::Fixed(0.0),
            },
        );
    }
    out
}

impl Scenario {
    pub fn builtin(n: u8) -> Option<Self> {
        if !(1..=4).contains(&n) {
            return None;
        }
        Some(Self {
            id: n.to_string(),
            description: builtin_description(n).to_string(),
            cycle_count: DEFAULT_CYCLES,
            cycle_budget_ms: DEFAULT_BUDGET_MS,
            source: InjectSource::Pc,
            steps: builtin_steps(n, DEFAULT_CYCLES),
            overrides: Settings::empty(),
            origin: Origin::Builtin(n),
        })
    }

    /// Parses the `key=value` scenario format. `scenario.*` keys describe the
    /// schedule; everything else overrides configuration.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let bad = |key: &str, value: &str| ScenarioError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let mut s = Self {
            id: "custom".into(),
            description: String::new(),
            cycle_count: DEFAULT_CYCLES,
            cycle_budget_ms: DEFAULT_BUDGET_MS,
            source: InjectSource::Pc,
            steps: Vec::new(),
            overrides: Settings::empty(),
            origin: Origin::File,
        };
        for (key, value) in parse_lines(text)? {
            match key.as_str() {
                "scenario.name" => s.id = value,
                "scenario.description" => s.description = value,
                "scenario.cycles" => s.cycle_count = value.parse().map_err(|_| bad(&key, &value))?,
                "scenario.budget_ms" => {
                    s.cycle_budget_ms = value
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite() && *v > 0.0)
                        .ok_or_else(|| bad(&key, &value))?
                }
                "scenario.source" => s.source = value.parse().map_err(|_| bad(&key, &value))?,
                "scenario.step" => s.steps.push(parse_step(&value).ok_or_else(|| bad(&key, &value))?),
                k if k.starts_with("scenario.") => return Err(bad(&key, &value)),
                _ => s.overrides.set(&key, &value),
            }
        }
        if s.steps.is_empty() {
            return Err(ScenarioError::NoSteps);
        }
        s.steps = normalize(s.steps);
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `1`..`4` for a built-in scenario, anything else is a file path.
    pub fn resolve(spec: &str) -> Result<Self, ScenarioError> {
        if let Ok(n) = spec.parse::<u8>() {
            return Self::builtin(n).ok_or_else(|| ScenarioError::Unknown(spec.to_string()));
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(ScenarioError::Unknown(spec.to_string()));
        }
        Self::load(path)
    }

    /// Changes the length; built-in schedules are re-spread over the new length.
    pub fn with_cycles(mut self, cycles: u64) -> Self {
        self.cycle_count = cycles;
        if let Origin::Builtin(n) = self.origin {
            self.steps = normalize(builtin_steps(n, cycles));
        }
        self
    }

    pub fn steps(&self) -> &[ScheduleStep] {
        &self.steps
    }

    /// Step in force at `cycle`.
    pub fn step_at(&self, cycle: u64) -> ScheduleStep {
        let i = self.steps.partition_point(|s| s.from_cycle <= cycle);
        self.steps[i.saturating_sub(1)]
    }

    /// Wheel velocity set-point at `cycle`.
    pub fn rpm_at(&self, cycle: u64) -> f64 {
        self.step_at(cycle).rpm
    }

    /// Cycles at which the velocity set-point changes.
    pub fn level_changes(&self) -> Vec<u64> {
        self.steps
            .windows(2)
            .filter(|w| w[0].rpm != w[1].rpm)
            .map(|w| w[1].from_cycle)
            .collect()
    }

    /// Renders the scenario in the file format.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario.name={}\nscenario.description={}\nscenario.cycles={}\nscenario.budget_ms={}\nscenario.source={}\n",
            self.id, self.description, self.cycle_count, self.cycle_budget_ms, self.source
        );
        for s in &self.steps {
            let steer = match s.steer {
                SteerSpec::Fixed(d) => d.to_string(),
                SteerSpec::Sweep { extreme } => format!("sweep:{extreme}"),
            };
            out.push_str(&format!("scenario.step={},{},{}\n", s.from_cycle, s.rpm, steer));
        }
        for (k, v) in self.overrides.iter() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// `cycle,rpm,steer` where steer is degrees, `sweep` or `sweep:<deg>`.
fn parse_step(v: &str) -> Option<ScheduleStep> {
    let mut parts = v.split(',').map(str::trim);
    let from_cycle = parts.next()?.parse().ok()?;
    let rpm: f64 = parts.next()?.parse().ok().filter(|r: &f64| r.is_finite())?;
    let steer = match parts.next().unwrap_or("0") {
        "sweep" => SteerSpec::Sweep { extreme: SWEEP_EXTREME },
        s => match s.strip_prefix("sweep:") {
            Some(e) => SteerSpec::Sweep {
                extreme: e.parse().ok().filter(|x: &f64| x.is_finite() && *x > 0.0)?,
            },
            None => SteerSpec::Fixed(s.parse().ok().filter(|x: &f64| x.is_finite())?),
        },
    };
    if parts.next().is_some() {
        return None;
    }
    Some(ScheduleStep { from_cycle, rpm, steer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_one_split() {
        let s = Scenario::builtin(1).unwrap();
        assert_eq!(s.rpm_at(0), 0.0);
        assert_eq!(s.rpm_at(499), 0.0);
        assert_eq!(s.rpm_at(500), 50.0);
        assert_eq!(s.rpm_at(999), 50.0);
    }

    #[test]
    fn staircase_shape() {
        // Oracle: level i covers [76 i, 76 (i+1)), the last level runs to the end.
        let s = Scenario::builtin(3).unwrap();
        let dwell = 1000 / 13;
        assert_eq!(dwell, 76);
        for c in 0..1000u64 {
            let level = ((c / dwell) as usize).min(12);
            assert_eq!(s.rpm_at(c), STAIRCASE[level], "cycle {c}");
        }
        assert_eq!(s.rpm_at(0), 0.0);
        let peak = (0..1000).map(|c| s.rpm_at(c)).fold(0.0, f64::max);
        assert_eq!(peak, 300.0);
        assert_eq!(s.level_changes().len(), 12);
    }

    #[test]
    fn sweeping_scenarios() {
        for n in [2, 4] {
            let s = Scenario::builtin(n).unwrap();
            assert!(s
                .steps()
                .iter()
                .all(|st| matches!(st.steer, SteerSpec::Sweep { extreme } if extreme == 30.0)));
        }
        assert_eq!(Scenario::builtin(2).unwrap().rpm_at(123), 50.0);
        let s3 = Scenario::builtin(3).unwrap();
        let s4 = Scenario::builtin(4).unwrap();
        assert!((0..1000).all(|c| s3.rpm_at(c) == s4.rpm_at(c)));
    }

    #[test]
    fn unknown_ids() {
        assert!(Scenario::builtin(0).is_none());
        assert!(Scenario::builtin(5).is_none());
        assert!(matches!(Scenario::resolve("7"), Err(ScenarioError::Unknown(_))));
        assert!(matches!(
            Scenario::resolve("/no/such/file"),
            Err(ScenarioError::Unknown(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let text = "scenario.name=ramp\nscenario.cycles=40\nscenario.source=rc\n\
                    scenario.step=10,100,sweep\nscenario.step=0,20,-5\nwheel.kp=0.1\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.id, "ramp");
        assert_eq!(s.cycle_count, 40);
        assert_eq!(s.source, InjectSource::Rc);
        assert_eq!(s.rpm_at(9), 20.0);
        assert_eq!(s.step_at(0).steer, SteerSpec::Fixed(-5.0));
        assert_eq!(s.rpm_at(10), 100.0);
        assert_eq!(s.overrides.raw("wheel.kp"), Some("0.1"));
        assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(
            Scenario::parse("scenario.cycles=10\n"),
            Err(ScenarioError::NoSteps)
        ));
        assert!(matches!(
            Scenario::parse("scenario.step=0,abc\n"),
            Err(ScenarioError::BadValue { .. })
        ));
        assert!(matches!(
            Scenario::parse("scenario.bogus=1\nscenario.step=0,0\n"),
            Err(ScenarioError::BadValue { .. })
        ));
        assert!(matches!(
            Scenario::parse("no equals sign\n"),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn with_cycles_respreads_builtins() {
        let s = Scenario::builtin(1).unwrap().with_cycles(100);
        assert_eq!(s.rpm_at(49), 0.0);
        assert_eq!(s.rpm_at(50), 50.0);
        let empty = Scenario::builtin(3).unwrap().with_cycles(0);
        assert_eq!(empty.cycle_count, 0);
    }
}
