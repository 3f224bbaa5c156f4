//! C ABI over the wrmcu codec, operation state machine and simulator.
//!
//! Every function returns a [`WrStatus`]; on failure a message is kept per
//! thread and can be fetched with [`wr_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wrmcu::config::Settings;
use wrmcu::control::{fsm_step, Action, CtrlState, CycleMetrics, OpState, PoolMode, Timing, MAX_WAIT_DEPTH};
use wrmcu::messages::{
    crc8, encode_message, CodecError, FrameDecoder, Message, Order, SetpointKind, Source, Telemetry, WHEEL_COUNT,
};
use wrmcu::scenario::{InjectSource, RunOptions, Runner, Scenario, Summary};

/// Result code of every call. Negative values are errors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrStatus {
    Ok = 0,
    /// The decoder consumed all input without completing a frame.
    NeedMore = 1,
    /// The simulation has run all its cycles.
    Done = 2,
    NullPointer = -1,
    Range = -2,
    Checksum = -3,
    UnknownType = -4,
    Malformed = -5,
    BufferTooSmall = -6,
    InvalidArgument = -7,
    Internal = -8,
}

/// Order kinds as seen from C.
pub const WR_ORDER_VELOCITY: u8 = 0;
pub const WR_ORDER_TENSION: u8 = 1;
pub const WR_ORDER_CURRENT: u8 = 2;
pub const WR_ORDER_STOP: u8 = 3;

/// Decoded message tags.
pub const WR_DECODED_NONE: u8 = 0;
pub const WR_DECODED_ORDER: u8 = 1;
pub const WR_DECODED_TELEMETRY: u8 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrOrder {
    /// One of the `WR_ORDER_*` constants.
    pub kind: u8,
    pub wheels: [f64; 4],
    pub steering: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrTelemetry {
    pub cycle: u16,
    pub velocity: [f64; 4],
    pub current: [f64; 4],
    pub position: f64,
    pub compute_us: u16,
    pub op_state: u8,
    pub mode: u8,
    pub fault: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrDecoded {
    /// One of the `WR_DECODED_*` constants; selects the valid field.
    pub tag: u8,
    pub order: WrOrder,
    pub telemetry: WrTelemetry,
}

/// Operation state for wr_fsm_step. `op_code` is 0 working, 1..=n
/// waiting, 127 reconnecting; `mode` indexes a ring of `mode_count` modes.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WrFsmState {
    pub op_code: u8,
    pub mode: u32,
    pub n: u8,
    pub mode_count: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrSimOptions {
    /// Built-in scenario 1..=4.
    pub scenario: u8,
    /// Cycle count; negative keeps the scenario's default.
    pub cycles: i64,
    pub threaded: bool,
    /// Measure compute time with the host clock; otherwise report 0.
    pub wall_timing: bool,
    /// Inject set-points as RC pulses instead of PC frames.
    pub rc_source: bool,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrCycleMetrics {
    pub cycle: u64,
    pub compute_us: u64,
    pub op_state: u8,
    pub mode: u8,
    pub wheel_setpoint: [f64; 4],
    pub wheel_rpm: [f64; 4],
    pub wheel_volts: [f64; 4],
    pub wheel_ma: [f64; 4],
    pub steer_setpoint: f64,
    pub steer_deg: f64,
    pub fault: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WrSummary {
    pub cycles: u64,
    pub avg_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub violations: u64,
    pub faults: u64,
    pub empty: bool,
}

/// Opaque incremental frame decoder.
pub struct WrDecoder(FrameDecoder);

/// Opaque running simulation.
pub struct WrSimulation {
    runner: Runner,
    metrics: Vec<CycleMetrics>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: WrStatus, msg: impl Into<String>) -> WrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> WrStatus) -> WrStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(WrStatus::Internal, "internal panic"))
}

fn codec_status(e: &CodecError) -> WrStatus {
    let status = match e {
        CodecError::Range { .. } => WrStatus::Range,
        CodecError::Checksum { .. } => WrStatus::Checksum,
        CodecError::UnknownType(_) => WrStatus::UnknownType,
        CodecError::Length { .. } | CodecError::Malformed(_) => WrStatus::Malformed,
    };
    fail(status, e.to_string())
}

fn order_from_c(o: &WrOrder) -> Result<Order, WrStatus> {
    let kind = match o.kind {
        WR_ORDER_STOP => return Ok(Order::stop(Source::Pc)),
        k => SetpointKind::from_wire(k)
            .ok_or_else(|| fail(WrStatus::InvalidArgument, format!("unknown order kind {k}")))?,
    };
    Ok(Order::Setpoint {
        kind,
        wheels: o.wheels,
        steering: o.steering,
        source: Source::Pc,
    })
}

fn order_to_c(o: &Order) -> WrOrder {
    match *o {
        Order::Stop { .. } => WrOrder {
            kind: WR_ORDER_STOP,
            ..WrOrder::default()
        },
        Order::Setpoint {
            kind, wheels, steering, ..
        } => WrOrder {
            kind: kind.wire_code(),
            wheels,
            steering,
        },
    }
}

fn telemetry_from_c(t: &WrTelemetry) -> Telemetry {
    Telemetry {
        cycle: t.cycle,
        velocity: t.velocity,
        current: t.current,
        position: t.position,
        compute_us: t.compute_us,
        op_state: t.op_state,
        mode: t.mode,
        fault: t.fault,
    }
}

fn telemetry_to_c(t: &Telemetry) -> WrTelemetry {
    WrTelemetry {
        cycle: t.cycle,
        velocity: t.velocity,
        current: t.current,
        position: t.position,
        compute_us: t.compute_us,
        op_state: t.op_state,
        mode: t.mode,
        fault: t.fault,
    }
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], WrStatus> {
    if len == 0 {
        Ok(&[])
    } else if data.is_null() {
        Err(fail(WrStatus::NullPointer, "null buffer with non-zero length"))
    } else {
        Ok(std::slice::from_raw_parts(data, len))
    }
}

unsafe fn emit(frame: &[u8], buf: *mut u8, cap: usize, written: *mut usize) -> WrStatus {
    if written.is_null() {
        return fail(WrStatus::NullPointer, "written is null");
    }
    *written = frame.len();
    if cap < frame.len() {
        return fail(WrStatus::BufferTooSmall, format!("frame needs {} bytes", frame.len()));
    }
    if buf.is_null() {
        return fail(WrStatus::NullPointer, "buffer is null");
    }
    ptr::copy_nonoverlapping(frame.as_ptr(), buf, frame.len());
    WrStatus::Ok
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string and returns the full message length (without NUL).
/// Pass a null `buf` to query the length.
#[no_mangle]
pub unsafe extern "C" fn wr_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// CRC-8 (polynomial 0x07) of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn wr_crc8(data: *const u8, len: usize, out: *mut u8) -> WrStatus {
    guard(|| {
        if out.is_null() {
            return fail(WrStatus::NullPointer, "out is null");
        }
        match bytes(data, len) {
            Ok(b) => {
                *out = crc8(b);
                WrStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Encodes an order into `buf`. `*written` receives the frame length, also
/// when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn wr_encode_order(
    order: *const WrOrder,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> WrStatus {
    guard(|| {
        let Some(o) = order.as_ref() else {
            return fail(WrStatus::NullPointer, "order is null");
        };
        let order = match order_from_c(o) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match encode_message(&order.into()) {
            Ok(frame) => emit(&frame, buf, cap, written),
            Err(e) => codec_status(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wr_encode_telemetry(
    telemetry: *const WrTelemetry,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> WrStatus {
    guard(|| {
        let Some(t) = telemetry.as_ref() else {
            return fail(WrStatus::NullPointer, "telemetry is null");
        };
        match encode_message(&telemetry_from_c(t).into()) {
            Ok(frame) => emit(&frame, buf, cap, written),
            Err(e) => codec_status(&e),
        }
    })
}

#[no_mangle]
pub extern "C" fn wr_decoder_new() -> *mut WrDecoder {
    Box::into_raw(Box::new(WrDecoder(FrameDecoder::new())))
}

#[no_mangle]
pub unsafe extern "C" fn wr_decoder_free(decoder: *mut WrDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Feeds bytes until a frame completes or the input is exhausted.
/// `*consumed` is how many bytes were used. Returns `Ok` with `*out` filled
/// for a valid frame, a negative status for a rejected frame, or `NeedMore`.
#[no_mangle]
pub unsafe extern "C" fn wr_decoder_feed(
    decoder: *mut WrDecoder,
    data: *const u8,
    len: usize,
    consumed: *mut usize,
    out: *mut WrDecoded,
) -> WrStatus {
    guard(|| {
        let (Some(dec), Some(out)) = (decoder.as_mut(), out.as_mut()) else {
            return fail(WrStatus::NullPointer, "decoder or out is null");
        };
        if consumed.is_null() {
            return fail(WrStatus::NullPointer, "consumed is null");
        }
        let input = match bytes(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        *out = WrDecoded::default();
        for (i, &b) in input.iter().enumerate() {
            if let Some(result) = dec.0.feed(b) {
                *consumed = i + 1;
                return match result {
                    Ok(Message::Order(o)) => {
                        out.tag = WR_DECODED_ORDER;
                        out.order = order_to_c(&o);
                        WrStatus::Ok
                    }
                    Ok(Message::Telemetry(t)) => {
                        out.tag = WR_DECODED_TELEMETRY;
                        out.telemetry = telemetry_to_c(&t);
                        WrStatus::Ok
                    }
                    Err(e) => codec_status(&e),
                };
            }
        }
        *consumed = input.len();
        WrStatus::NeedMore
    })
}

/// One step of the operation state machine. `*read_new` is set when the
/// controller should read the pending message.
#[no_mangle]
pub unsafe extern "C" fn wr_fsm_step(
    state: *const WrFsmState,
    available: bool,
    next: *mut WrFsmState,
    read_new: *mut bool,
) -> WrStatus {
    guard(|| {
        let (Some(s), Some(next)) = (state.as_ref(), next.as_mut()) else {
            return fail(WrStatus::NullPointer, "state or next is null");
        };
        if !(1..=MAX_WAIT_DEPTH).contains(&s.n) || s.mode_count == 0 || s.mode >= s.mode_count {
            return fail(WrStatus::InvalidArgument, "n or mode out of range");
        }
        let op = match OpState::from_code(s.op_code) {
            Some(OpState::Waiting(i)) if i > s.n => None,
            other => other,
        };
        let Some(op) = op else {
            return fail(
                WrStatus::InvalidArgument,
                format!("op code {} invalid for n = {}", s.op_code, s.n),
            );
        };
        let cur = CtrlState {
            op,
            mode: s.mode as usize,
            ..CtrlState::initial(s.n, s.mode_count as usize)
        };
        let (n, action) = fsm_step(&cur, available);
        *next = WrFsmState {
            op_code: n.op.code(),
            mode: n.mode as u32,
            n: s.n,
            mode_count: s.mode_count,
        };
        if let Some(r) = read_new.as_mut() {
            *r = action == Action::ReadNew;
        }
        WrStatus::Ok
    })
}

/// Builds a simulation of a built-in scenario. `config` is optional
/// `key=value` text layered over the defaults.
#[no_mangle]
pub unsafe extern "C" fn wr_simulation_new(
    options: *const WrSimOptions,
    config: *const c_char,
    out: *mut *mut WrSimulation,
) -> WrStatus {
    guard(|| {
        let (Some(o), false) = (options.as_ref(), out.is_null()) else {
            return fail(WrStatus::NullPointer, "options or out is null");
        };
        *out = ptr::null_mut();
        let Some(mut scenario) = Scenario::builtin(o.scenario) else {
            return fail(
                WrStatus::InvalidArgument,
                format!("no built-in scenario {}", o.scenario),
            );
        };
        if o.cycles >= 0 {
            scenario = scenario.with_cycles(o.cycles as u64);
        }
        let mut settings = Settings::with_defaults();
        if !config.is_null() {
            let text = match CStr::from_ptr(config).to_str() {
                Ok(t) => t,
                Err(_) => return fail(WrStatus::InvalidArgument, "config is not UTF-8"),
            };
            if let Err(e) = settings.merge_text(text) {
                return fail(WrStatus::InvalidArgument, e.to_string());
            }
        }
        let opts = RunOptions {
            mode: if o.threaded {
                PoolMode::Threaded
            } else {
                PoolMode::Sequential
            },
            timing: if o.wall_timing { Timing::Wall } else { Timing::Off },
            seed: o.seed,
            source: Some(if o.rc_source {
                InjectSource::Rc
            } else {
                InjectSource::Pc
            }),
            ..RunOptions::default()
        };
        match Runner::new(&scenario, &settings, opts) {
            Ok(runner) => {
                *out = Box::into_raw(Box::new(WrSimulation {
                    runner,
                    metrics: Vec::new(),
                }));
                WrStatus::Ok
            }
            Err(e) => fail(WrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs one control cycle. Returns `Done` once every cycle has run.
#[no_mangle]
pub unsafe extern "C" fn wr_simulation_step(sim: *mut WrSimulation, out: *mut WrCycleMetrics) -> WrStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(WrStatus::NullPointer, "simulation is null");
        };
        if sim.runner.done() {
            return WrStatus::Done;
        }
        let m = match sim.runner.step() {
            Ok(m) => m,
            Err(e) => return fail(WrStatus::Internal, e.to_string()),
        };
        sim.metrics.push(m);
        if let Some(out) = out.as_mut() {
            *out = WrCycleMetrics {
                cycle: m.cycle,
                compute_us: m.compute_us,
                op_state: m.op_state.code(),
                mode: m.mode.0,
                wheel_setpoint: m.wheels.map(|w| w.setpoint),
                wheel_rpm: m.wheels.map(|w| w.rpm),
                wheel_volts: m.wheels.map(|w| w.volts),
                wheel_ma: m.wheels.map(|w| w.ma),
                steer_setpoint: m.steer_sp,
                steer_deg: m.steer_deg,
                fault: m.fault,
            };
        }
        WrStatus::Ok
    })
}

/// Summary of the cycles run so far.
#[no_mangle]
pub unsafe extern "C" fn wr_simulation_summary(sim: *const WrSimulation, out: *mut WrSummary) -> WrStatus {
    guard(|| {
        let (Some(sim), Some(out)) = (sim.as_ref(), out.as_mut()) else {
            return fail(WrStatus::NullPointer, "simulation or out is null");
        };
        let s = Summary::from_metrics(sim.runner.scenario(), &sim.metrics);
        *out = WrSummary {
            cycles: s.cycles,
            avg_ms: s.avg_ms,
            max_ms: s.max_ms,
            budget_ms: s.budget_ms,
            violations: s.violations,
            faults: s.faults,
            empty: s.empty,
        };
        WrStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn wr_simulation_free(sim: *mut WrSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

const _: () = assert!(WHEEL_COUNT == 4);
