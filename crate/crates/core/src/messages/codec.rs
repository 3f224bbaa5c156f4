//! Flag-delimited, byte-stuffed frames.
//!
//! ```text
//! 0x7E | escape( type:u8 | len:u8 | payload[len] | crc8(type|len|payload) )
//! ```
//!
//! Body bytes equal to 0x7E or 0x7D are sent as `0x7D, byte ^ 0x20`, so a
//! raw 0x7E on the line always marks a frame start. All multi-byte integers
//! are little endian.

use thiserror::Error;

use super::crc::crc8;
use super::{Message, Order, SetpointKind, Source, Telemetry, WHEEL_COUNT};

pub const FLAG: u8 = 0x7E;
pub const ESCAPE: u8 = 0x7D;
pub const ESCAPE_XOR: u8 = 0x20;

pub const MSG_SETPOINT: u8 = 0x01;
pub const MSG_STOP: u8 = 0x02;
pub const MSG_TELEMETRY: u8 = 0x81;

const SETPOINT_LEN: usize = 11;
const TELEMETRY_LEN: usize = 24;
const FAULT_BIT: u8 = 0x80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("{field} = {value} is outside the representable range")]
    Range { field: &'static str, value: f64 },
    #[error("checksum mismatch: computed {computed:#04x}, received {received:#04x}")]
    Checksum { computed: u8, received: u8 },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("message type {msg_type:#04x} with payload length {len}")]
    Length { msg_type: u8, len: usize },
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

/// Wraps an arbitrary body into a flagged, escaped frame.
pub fn encode_frame(msg_type: u8, payload: &[u8]) -> Vec<u8> {
    assert!(payload.len() <= u8::MAX as usize, "payload longer than 255 bytes");
    let mut body = Vec::with_capacity(payload.len() + 3);
    body.push(msg_type);
    body.push(payload.len() as u8);
    body.extend_from_slice(payload);
    body.push(crc8(&body));

    let mut out = Vec::with_capacity(body.len() * 2 + 1);
    out.push(FLAG);
    for b in body {
        if b == FLAG || b == ESCAPE {
            out.push(ESCAPE);
            out.push(b ^ ESCAPE_XOR);
        } else {
            out.push(b);
        }
    }
    out
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, CodecError> {
    match msg {
        Message::Order(o) => encode_order(o),
        Message::Telemetry(t) => encode_telemetry(t),
    }
}

pub(crate) fn encode_order(order: &Order) -> Result<Vec<u8>, CodecError> {
    order.validate()?;
    match order {
        Order::Stop { .. } => Ok(encode_frame(MSG_STOP, &[])),
        Order::Setpoint {
            kind, wheels, steering, ..
        } => {
            let mut payload = Vec::with_capacity(SETPOINT_LEN);
            payload.push(kind.wire_code());
            let scale = wheel_scale(*kind);
            for (i, &w) in wheels.iter().enumerate() {
                put_i16(&mut payload, WHEEL_NAMES[i], w, scale)?;
            }
            put_i16(&mut payload, "steering", *steering, 10.0)?;
            Ok(encode_frame(MSG_SETPOINT, &payload))
        }
    }
}

pub(crate) fn encode_telemetry(t: &Telemetry) -> Result<Vec<u8>, CodecError> {
    if t.op_state >= FAULT_BIT {
        return Err(CodecError::Range {
            field: "op_state",
            value: t.op_state as f64,
        });
    }
    let mut payload = Vec::with_capacity(TELEMETRY_LEN);
    payload.extend_from_slice(&t.cycle.to_le_bytes());
    for (i, &v) in t.velocity.iter().enumerate() {
        put_i16(&mut payload, VEL_NAMES[i], v, 10.0)?;
    }
    for (i, &c) in t.current.iter().enumerate() {
        put_i16(&mut payload, CUR_NAMES[i], c, 1.0)?;
    }
    put_i16(&mut payload, "position", t.position, 10.0)?;
    payload.extend_from_slice(&t.compute_us.to_le_bytes());
    payload.push(t.op_state | if t.fault { FAULT_BIT } else { 0 });
    payload.push(t.mode);
    debug_assert_eq!(payload.len(), TELEMETRY_LEN);
    Ok(encode_frame(MSG_TELEMETRY, &payload))
}

const WHEEL_NAMES: [&str; WHEEL_COUNT] = ["wheel0", "wheel1", "wheel2", "wheel3"];
const VEL_NAMES: [&str; WHEEL_COUNT] = ["velocity0", "velocity1", "velocity2", "velocity3"];
const CUR_NAMES: [&str; WHEEL_COUNT] = ["current0", "current1", "current2", "current3"];

/// Wire units per engineering unit: 0.1 rpm, 1 mV, 1 mA.
fn wheel_scale(kind: SetpointKind) -> f64 {
    match kind {
        SetpointKind::Velocity => 10.0,
        SetpointKind::Tension => 1000.0,
        SetpointKind::Current => 1.0,
    }
}

fn put_i16(out: &mut Vec<u8>, field: &'static str, value: f64, scale: f64) -> Result<(), CodecError> {
    let scaled = (value * scale).round();
    if !scaled.is_finite() || scaled < i16::MIN as f64 || scaled > i16::MAX as f64 {
        return Err(CodecError::Range { field, value });
    }
    out.extend_from_slice(&(scaled as i16).to_le_bytes());
    Ok(())
}

fn get_i16(bytes: &[u8], at: usize, scale: f64) -> f64 {
    i16::from_le_bytes([bytes[at], bytes[at + 1]]) as f64 / scale
}

fn decode_body(msg_type: u8, payload: &[u8]) -> Result<Message, CodecError> {
    let expect_len = |len: usize| {
        if payload.len() == len {
            Ok(())
        } else {
            Err(CodecError::Length {
                msg_type,
                len: payload.len(),
            })
        }
    };
    match msg_type {
        MSG_STOP => {
            expect_len(0)?;
            Ok(Message::Order(Order::Stop { source: Source::Pc }))
        }
        MSG_SETPOINT => {
            expect_len(SETPOINT_LEN)?;
            let kind = SetpointKind::from_wire(payload[0]).ok_or(CodecError::Malformed("setpoint kind"))?;
            let scale = wheel_scale(kind);
            let mut wheels = [0.0; WHEEL_COUNT];
            for (i, w) in wheels.iter_mut().enumerate() {
                *w = get_i16(payload, 1 + 2 * i, scale);
            }
            let order = Order::Setpoint {
                kind,
                wheels,
                steering: get_i16(payload, 9, 10.0),
                source: Source::Pc,
            };
            order
                .validate()
                .map_err(|_| CodecError::Malformed("setpoint out of range"))?;
            Ok(Message::Order(order))
        }
        MSG_TELEMETRY => {
            expect_len(TELEMETRY_LEN)?;
            let mut t = Telemetry {
                cycle: u16::from_le_bytes([payload[0], payload[1]]),
                ..Telemetry::default()
            };
            for i in 0..WHEEL_COUNT {
                t.velocity[i] = get_i16(payload, 2 + 2 * i, 10.0);
                t.current[i] = get_i16(payload, 10 + 2 * i, 1.0);
            }
            t.position = get_i16(payload, 18, 10.0);
            t.compute_us = u16::from_le_bytes([payload[20], payload[21]]);
            t.op_state = payload[22] & !FAULT_BIT;
            t.fault = payload[22] & FAULT_BIT != 0;
            t.mode = payload[23];
            Ok(Message::Telemetry(t))
        }
        other => Err(CodecError::UnknownType(other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Hunt,
    Type,
    Len,
    Payload,
    Crc,
}

/// Incremental, resynchronising frame decoder. One instance per link.
#[derive(Debug, Clone)]
pub struct FrameDecoder {
    stage: Stage,
    escaped: bool,
    msg_type: u8,
    len: usize,
    payload: Vec<u8>,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self {
            stage: Stage::Hunt,
            escaped: false,
            msg_type: 0,
            len: 0,
            payload: Vec::with_capacity(u8::MAX as usize),
        }
    }

    /// True while a frame has started but not completed.
    pub fn in_frame(&self) -> bool {
        self.stage != Stage::Hunt
    }

    /// Consumes one byte. Returns a message or an error exactly when a
    /// frame completes; `None` otherwise.
    pub fn feed(&mut self, byte: u8) -> Option<Result<Message, CodecError>> {
        if byte == FLAG {
            // Start of a frame; aborts any partial one.
            self.start();
            return None;
        }
        if self.stage == Stage::Hunt {
            return None;
        }
        if byte == ESCAPE && !self.escaped {
            self.escaped = true;
            return None;
        }
        let byte = if std::mem::take(&mut self.escaped) {
            byte ^ ESCAPE_XOR
        } else {
            byte
        };
        match self.stage {
            Stage::Hunt => None,
            Stage::Type => {
                self.msg_type = byte;
                self.stage = Stage::Len;
                None
            }
            Stage::Len => {
                self.len = byte as usize;
                self.stage = if self.len == 0 { Stage::Crc } else { Stage::Payload };
                None
            }
            Stage::Payload => {
                self.payload.push(byte);
                if self.payload.len() == self.len {
                    self.stage = Stage::Crc;
                }
                None
            }
            Stage::Crc => {
                self.stage = Stage::Hunt;
                Some(self.finish(byte))
            }
        }
    }

    /// Feeds a slice, collecting every completed frame outcome.
    pub fn feed_all(&mut self, bytes: &[u8]) -> Vec<Result<Message, CodecError>> {
        bytes.iter().filter_map(|&b| self.feed(b)).collect()
    }

    fn start(&mut self) {
        self.stage = Stage::Type;
        self.escaped = false;
        self.len = 0;
        self.payload.clear();
    }

    fn finish(&mut self, received: u8) -> Result<Message, CodecError> {
        let mut crc_input = Vec::with_capacity(self.payload.len() + 2);
        crc_input.push(self.msg_type);
        crc_input.push(self.len as u8);
        crc_input.extend_from_slice(&self.payload);
        let computed = crc8(&crc_input);
        if computed != received {
            return Err(CodecError::Checksum { computed, received });
        }
        decode_body(self.msg_type, &self.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode_stream(bytes: &[u8]) -> Vec<Result<Message, CodecError>> {
        FrameDecoder::new().feed_all(bytes)
    }

    #[test]
    fn stop_frame_bytes() {
        let bytes = encode_order(&Order::stop(Source::Pc)).unwrap();
        assert_eq!(bytes, vec![0x7E, 0x02, 0x00, 0x2A]);
    }

    #[test]
    fn zero_telemetry_is_24_zero_bytes() {
        let bytes = encode_telemetry(&Telemetry::default()).unwrap();
        // flag, type, len, 24 payload bytes, crc; no byte needs escaping.
        assert_eq!(bytes.len(), 1 + 2 + 24 + 1);
        assert_eq!(&bytes[..3], &[0x7E, 0x81, 24]);
        assert!(bytes[3..27].iter().all(|&b| b == 0));
        let mut body = vec![0x81, 24];
        body.extend_from_slice(&[0u8; 24]);
        assert_eq!(bytes[27], crc8(&body));
    }

    #[test]
    fn decode_stop() {
        let out = decode_stream(&[0x7E, 0x02, 0x00, 0x2A]);
        assert_eq!(out, vec![Ok(Message::Order(Order::stop(Source::Pc)))]);
    }

    #[test]
    fn garbage_before_flag_is_skipped() {
        let out = decode_stream(&[0x13, 0x02, 0x00, 0xFF, 0x7E, 0x02, 0x00, 0x2A]);
        assert_eq!(out, vec![Ok(Message::Order(Order::stop(Source::Pc)))]);
    }

    #[test]
    fn flag_mid_frame_resyncs() {
        let mut bytes = encode_order(&Order::velocity([50.0; 4], 0.0, Source::Pc)).unwrap();
        bytes.truncate(6);
        bytes.extend_from_slice(&[0x7E, 0x02, 0x00, 0x2A]);
        assert_eq!(decode_stream(&bytes), vec![Ok(Message::Order(Order::stop(Source::Pc)))]);
    }

    #[test]
    fn flipped_bit_is_checksum_error() {
        let mut bytes = encode_order(&Order::velocity([50.0; 4], 10.0, Source::Pc)).unwrap();
        bytes[5] ^= 0x04;
        let out = decode_stream(&bytes);
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0], Err(CodecError::Checksum { .. })));
    }

    #[test]
    fn unknown_type_after_valid_crc() {
        let bytes = encode_frame(0x33, &[1, 2, 3]);
        assert_eq!(decode_stream(&bytes), vec![Err(CodecError::UnknownType(0x33))]);
    }

    #[test]
    fn wrong_length_for_known_type() {
        let bytes = encode_frame(MSG_STOP, &[0]);
        assert_eq!(
            decode_stream(&bytes),
            vec![Err(CodecError::Length {
                msg_type: MSG_STOP,
                len: 1
            })]
        );
    }

    #[test]
    fn escapes_flag_and_escape_bytes() {
        let bytes = encode_frame(0x7E, &[0x7D, 0x00]);
        assert_eq!(&bytes[..5], &[0x7E, 0x7D, 0x5E, 0x02, 0x7D]);
        assert_eq!(bytes[5], 0x5D);
        assert_eq!(bytes.iter().filter(|&&b| b == FLAG).count(), 1);
    }

    #[test]
    fn escaped_payload_round_trips() {
        // 12.6 rpm -> 126 = 0x7E on the wire.
        let order = Order::velocity([12.6, 12.5, -12.6, 0.0], 0.0, Source::Pc);
        let bytes = encode_order(&order).unwrap();
        assert!(bytes[1..].iter().all(|&b| b != FLAG));
        assert_eq!(decode_stream(&bytes), vec![Ok(Message::Order(order))]);
    }

    #[test]
    fn out_of_range_order_rejected() {
        let order = Order::velocity([301.0, 0.0, 0.0, 0.0], 0.0, Source::Pc);
        assert!(matches!(
            encode_order(&order),
            Err(CodecError::Range { field: "wheel0", .. })
        ));
        let steer = Order::velocity([0.0; 4], -30.5, Source::Pc);
        assert!(matches!(
            encode_order(&steer),
            Err(CodecError::Range { field: "steering", .. })
        ));
    }

    #[test]
    fn telemetry_out_of_wire_range() {
        let t = Telemetry {
            current: [40_000.0, 0.0, 0.0, 0.0],
            ..Telemetry::default()
        };
        assert!(matches!(
            encode_telemetry(&t),
            Err(CodecError::Range { field: "current0", .. })
        ));
    }

    #[test]
    fn fault_flag_travels_in_op_state_high_bit() {
        let t = Telemetry {
            op_state: 3,
            fault: true,
            mode: 1,
            ..Telemetry::default()
        };
        let bytes = encode_telemetry(&t).unwrap();
        assert_eq!(decode_stream(&bytes), vec![Ok(Message::Telemetry(t))]);
    }

    #[test]
    fn back_to_back_frames() {
        let a = Order::velocity([50.0; 4], 0.0, Source::Pc);
        let b = Order::stop(Source::Pc);
        let mut bytes = encode_order(&a).unwrap();
        bytes.extend(encode_order(&b).unwrap());
        assert_eq!(
            decode_stream(&bytes),
            vec![Ok(Message::Order(a)), Ok(Message::Order(b))]
        );
    }
}
