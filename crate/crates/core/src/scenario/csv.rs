//! Per-cycle metrics as CSV, and the RC edge trace format.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! parsed file reproduces the metrics bit for bit.

use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use crate::control::{CycleMetrics, OpState, WheelMetrics};
use crate::io::{ModeId, RcChannel};
use crate::kernel::SimTime;
use crate::messages::WHEEL_COUNT;

pub const CSV_HEADER: &str = "cycle,compute_us,op_state,mode,\
w0_sp,w0_rpm,w0_volts,w0_ma,\
w1_sp,w1_rpm,w1_volts,w1_ma,\
w2_sp,w2_rpm,w2_volts,w2_ma,\
w3_sp,w3_rpm,w3_volts,w3_ma,\
steer_sp,steer_deg,fault";

const COLUMNS: usize = 4 + 4 * WHEEL_COUNT + 3;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn format_row(m: &CycleMetrics) -> String {
    let mut s = format!("{},{},{},{}", m.cycle, m.compute_us, m.op_state, m.mode);
    for w in &m.wheels {
        let _ = write!(s, ",{},{},{},{}", w.setpoint, w.rpm, w.volts, w.ma);
    }
    let _ = write!(s, ",{},{},{}", m.steer_sp, m.steer_deg, m.fault as u8);
    s
}

pub fn write_csv<W: io::Write>(metrics: &[CycleMetrics], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for m in metrics {
        writeln!(out, "{}", format_row(m))?;
    }
    out.flush()
}

pub fn to_csv_string(metrics: &[CycleMetrics]) -> String {
    let mut buf = Vec::new();
    write_csv(metrics, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

fn field<T: std::str::FromStr>(v: &str, name: &str, line: usize) -> Result<T, CsvError> {
    v.parse().map_err(|_| CsvError::Parse {
        line,
        reason: format!("bad {name} `{v}`"),
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<CycleMetrics>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(CsvError::Parse {
                line: 1,
                reason: "missing or unexpected header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.trim().split(',').collect();
        if f.len() != COLUMNS {
            return Err(CsvError::Parse {
                line,
                reason: format!("expected {COLUMNS} fields, found {}", f.len()),
            });
        }
        let op_state = OpState::parse_label(f[2]).ok_or_else(|| CsvError::Parse {
            line,
            reason: format!("bad op_state `{}`", f[2]),
        })?;
        let mut wheels = [WheelMetrics::default(); WHEEL_COUNT];
        for (i, w) in wheels.iter_mut().enumerate() {
            let b = 4 + 4 * i;
            *w = WheelMetrics {
                setpoint: field(f[b], "set-point", line)?,
                rpm: field(f[b + 1], "rpm", line)?,
                volts: field(f[b + 2], "volts", line)?,
                ma: field(f[b + 3], "current", line)?,
            };
        }
        let t = 4 + 4 * WHEEL_COUNT;
        out.push(CycleMetrics {
            cycle: field(f[0], "cycle", line)?,
            compute_us: field(f[1], "compute_us", line)?,
            op_state,
            mode: ModeId(field(f[3], "mode", line)?),
            wheels,
            steer_sp: field(f[t], "steer_sp", line)?,
            steer_deg: field(f[t + 1], "steer_deg", line)?,
            fault: match f[t + 2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(CsvError::Parse {
                        line,
                        reason: format!("bad fault flag `{other}`"),
                    })
                }
            },
        });
    }
    Ok(out)
}

/// One recorded RC pin edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RcEdge {
    pub at: SimTime,
    pub channel: RcChannel,
    pub rising: bool,
}

/// Parses `time_us,channel,level` lines; `#` comments and an optional
/// header line are skipped.
pub fn parse_rc_trace(text: &str) -> Result<Vec<RcEdge>, CsvError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || (idx == 0 && l.starts_with("time_us")) {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(CsvError::Parse {
                line,
                reason: "expected time_us,channel,level".into(),
            });
        }
        let rising = match f[2] {
            "rise" => true,
            "fall" => false,
            other => {
                return Err(CsvError::Parse {
                    line,
                    reason: format!("bad level `{other}`"),
                })
            }
        };
        out.push(RcEdge {
            at: SimTime::from_micros(field(f[0], "time", line)?),
            channel: f[1].parse().map_err(|reason| CsvError::Parse { line, reason })?,
            rising,
        });
    }
    Ok(out)
}

pub fn write_rc_trace<W: io::Write>(edges: &[RcEdge], mut out: W) -> io::Result<()> {
    writeln!(out, "time_us,channel,level")?;
    for e in edges {
        writeln!(
            out,
            "{},{},{}",
            e.at.as_micros(),
            e.channel,
            if e.rising { "rise" } else { "fall" }
        )?;
    }
    out.flush()
}
