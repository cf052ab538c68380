//! Bit-exact wire protocol for the RIS service model.
//!
//! Every message travels in a fixed frame: 2 magic bytes `0x4F 0x52`, a
//! version byte `0x01`, a message-type byte, a 32-bit big-endian payload
//! length, then the payload. All integers are unsigned big-endian; all
//! floating-point fields are IEEE-754 binary64 big-endian; complex
//! coefficients are `(real, imaginary)` pairs in RIS element order
//! (row-major, as fixed by the panel grid).
//!
//! Payload layouts (offsets after the 8-byte frame header):
//!
//! | type | message              | payload                                               |
//! |------|----------------------|-------------------------------------------------------|
//! | 0x01 | SetupRequest         | ris_id u32; rows u16; cols u16; phase_bits u8; element_aperture_m f64; panel_width_m f64; panel_height_m f64; fc_hz f64 |
//! | 0x02 | SetupResponse        | ris_id u32; status u8 (0 ok, 1 rejected)              |
//! | 0x03 | SubscriptionRequest  | ris_id u32; report_period_ms u32                      |
//! | 0x04 | SubscriptionResponse | ris_id u32; status u8                                 |
//! | 0x05 | Indication           | ris_id u32; seq u64; N u32; h_br N x (f64,f64); h_ru N x (f64,f64); h_bu (f64,f64); los_flag u8; timestamp_us u64 |
//! | 0x06 | ControlRequest       | ris_id u32; seq_echo u64; N u32; mode u8; payload per mode |
//! | 0x07 | ControlAck           | ris_id u32; seq_echo u64; status u8; applied_rate_bps_hz f64 |
//!
//! ControlRequest modes: 0 = discrete level indices (N x u16), 1 =
//! continuous radians (N x f64), 2 = beam direction (reserved; receivers
//! must answer `ControlAck` with status `unsupported-mode`).

use orix_core::Complex64;
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x4F, 0x52];
pub const VERSION: u8 = 0x01;
pub const FRAME_HEADER_LEN: usize = 8;
/// Sanity cap on the declared payload length.
pub const MAX_PAYLOAD_LEN: u32 = 1 << 24;
/// Wire-format ceiling on the phase bit-resolution.
pub const MAX_PHASE_BITS: u8 = 16;

pub const MSG_SETUP_REQUEST: u8 = 0x01;
pub const MSG_SETUP_RESPONSE: u8 = 0x02;
pub const MSG_SUBSCRIPTION_REQUEST: u8 = 0x03;
pub const MSG_SUBSCRIPTION_RESPONSE: u8 = 0x04;
pub const MSG_INDICATION: u8 = 0x05;
pub const MSG_CONTROL_REQUEST: u8 = 0x06;
pub const MSG_CONTROL_ACK: u8 = 0x07;

pub const CONTROL_MODE_DISCRETE: u8 = 0;
pub const CONTROL_MODE_CONTINUOUS: u8 = 1;
pub const CONTROL_MODE_BEAM_DIRECTION: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetupStatus {
    Ok = 0,
    Rejected = 1,
}

/// Result code of a control application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckStatus {
    Ok = 0,
    BadLength = 1,
    UnsupportedMode = 2,
    UnknownRis = 3,
}

impl AckStatus {
    pub fn from_byte(b: u8) -> Option<AckStatus> {
        match b {
            0 => Some(AckStatus::Ok),
            1 => Some(AckStatus::BadLength),
            2 => Some(AckStatus::UnsupportedMode),
            3 => Some(AckStatus::UnknownRis),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetupRequest {
    pub ris_id: u32,
    pub rows: u16,
    pub cols: u16,
    pub phase_bits: u8,
    pub element_aperture_m: f64,
    pub panel_width_m: f64,
    pub panel_height_m: f64,
    pub fc_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetupResponse {
    pub ris_id: u32,
    pub status: SetupStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubscriptionRequest {
    pub ris_id: u32,
    pub report_period_ms: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubscriptionResponse {
    pub ris_id: u32,
    pub status: SetupStatus,
}

/// Channel telemetry exported by the node: model-truth coefficients for the
/// AP-RIS, RIS-UE and AP-UE links of one report interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Indication {
    pub ris_id: u32,
    pub seq: u64,
    pub h_br: Vec<Complex64>,
    pub h_ru: Vec<Complex64>,
    pub h_bu: Complex64,
    pub los: bool,
    pub timestamp_us: u64,
}

impl Indication {
    pub fn n_elements(&self) -> usize {
        self.h_br.len()
    }
}

/// Per-element phase command payload.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlPayload {
    DiscreteIndices(Vec<u16>),
    ContinuousRadians(Vec<f64>),
    /// Reserved opcode: carried opaquely, never interpreted.
    BeamDirection { n: u32, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRequest {
    pub ris_id: u32,
    pub seq_echo: u64,
    pub payload: ControlPayload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlAck {
    pub ris_id: u32,
    pub seq_echo: u64,
    pub status: AckStatus,
    /// Rate measured on the held realization; exactly 0 when status != Ok.
    pub applied_rate_bps_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum E2Message {
    SetupRequest(SetupRequest),
    SetupResponse(SetupResponse),
    SubscriptionRequest(SubscriptionRequest),
    SubscriptionResponse(SubscriptionResponse),
    Indication(Indication),
    ControlRequest(ControlRequest),
    ControlAck(ControlAck),
}

impl E2Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            E2Message::SetupRequest(_) => MSG_SETUP_REQUEST,
            E2Message::SetupResponse(_) => MSG_SETUP_RESPONSE,
            E2Message::SubscriptionRequest(_) => MSG_SUBSCRIPTION_REQUEST,
            E2Message::SubscriptionResponse(_) => MSG_SUBSCRIPTION_RESPONSE,
            E2Message::Indication(_) => MSG_INDICATION,
            E2Message::ControlRequest(_) => MSG_CONTROL_REQUEST,
            E2Message::ControlAck(_) => MSG_CONTROL_ACK,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            E2Message::SetupRequest(_) => "SetupRequest",
            E2Message::SetupResponse(_) => "SetupResponse",
            E2Message::SubscriptionRequest(_) => "SubscriptionRequest",
            E2Message::SubscriptionResponse(_) => "SubscriptionResponse",
            E2Message::Indication(_) => "Indication",
            E2Message::ControlRequest(_) => "ControlRequest",
            E2Message::ControlAck(_) => "ControlAck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("indication vectors differ in length ({h_br} vs {h_ru})")]
    VectorLengthMismatch { h_br: usize, h_ru: usize },
    #[error("phase_bits {0} exceeds the wire ceiling of {MAX_PHASE_BITS}")]
    PhaseBitsTooLarge(u8),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD_LEN}-byte cap")]
    PayloadTooLarge(usize),
    #[error("applied_rate must be exactly 0 when the ack status is not ok")]
    NonzeroRateOnError,
}

/// Why a byte sequence was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported protocol version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownMsgType(u8),
    #[error("declared payload length {0} exceeds the {MAX_PAYLOAD_LEN}-byte cap")]
    PayloadTooLarge(u32),
    #[error("{msg}: payload structure inconsistent with declared length")]
    LengthInconsistent { msg: &'static str },
    #[error("{msg}: invalid {field} value {value}")]
    BadFieldValue {
        msg: &'static str,
        field: &'static str,
        value: u64,
    },
}

/// Outcome of decoding a (possibly partial) byte stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    /// One complete frame was parsed; `consumed` bytes belong to it.
    Message { msg: E2Message, consumed: usize },
    /// The buffer is a proper prefix of a valid frame.
    NeedMore,
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_complex(out: &mut Vec<u8>, v: Complex64) {
    put_f64(out, v.re);
    put_f64(out, v.im);
}

/// Encode one message into a complete frame. Encoding is deterministic and
/// injective over valid messages.
pub fn encode(msg: &E2Message) -> Result<Vec<u8>, EncodeError> {
    let mut payload = Vec::new();
    match msg {
        E2Message::SetupRequest(m) => {
            if m.phase_bits > MAX_PHASE_BITS {
                return Err(EncodeError::PhaseBitsTooLarge(m.phase_bits));
            }
            put_u32(&mut payload, m.ris_id);
            put_u16(&mut payload, m.rows);
            put_u16(&mut payload, m.cols);
            payload.push(m.phase_bits);
            put_f64(&mut payload, m.element_aperture_m);
            put_f64(&mut payload, m.panel_width_m);
            put_f64(&mut payload, m.panel_height_m);
            put_f64(&mut payload, m.fc_hz);
        }
        E2Message::SetupResponse(m) => {
            put_u32(&mut payload, m.ris_id);
            payload.push(m.status as u8);
        }
        E2Message::SubscriptionRequest(m) => {
            put_u32(&mut payload, m.ris_id);
            put_u32(&mut payload, m.report_period_ms);
        }
        E2Message::SubscriptionResponse(m) => {
            put_u32(&mut payload, m.ris_id);
            payload.push(m.status as u8);
        }
        E2Message::Indication(m) => {
            if m.h_br.len() != m.h_ru.len() {
                return Err(EncodeError::VectorLengthMismatch {
                    h_br: m.h_br.len(),
                    h_ru: m.h_ru.len(),
                });
            }
            put_u32(&mut payload, m.ris_id);
            put_u64(&mut payload, m.seq);
            put_u32(&mut payload, m.h_br.len() as u32);
            for h in &m.h_br {
                put_complex(&mut payload, *h);
            }
            for h in &m.h_ru {
                put_complex(&mut payload, *h);
            }
            put_complex(&mut payload, m.h_bu);
            payload.push(u8::from(m.los));
            put_u64(&mut payload, m.timestamp_us);
        }
        E2Message::ControlRequest(m) => {
            put_u32(&mut payload, m.ris_id);
            put_u64(&mut payload, m.seq_echo);
            match &m.payload {
                ControlPayload::DiscreteIndices(indices) => {
                    put_u32(&mut payload, indices.len() as u32);
                    payload.push(CONTROL_MODE_DISCRETE);
                    for ix in indices {
                        put_u16(&mut payload, *ix);
                    }
                }
                ControlPayload::ContinuousRadians(values) => {
                    put_u32(&mut payload, values.len() as u32);
                    payload.push(CONTROL_MODE_CONTINUOUS);
                    for v in values {
                        put_f64(&mut payload, *v);
                    }
                }
                ControlPayload::BeamDirection { n, data } => {
                    put_u32(&mut payload, *n);
                    payload.push(CONTROL_MODE_BEAM_DIRECTION);
                    payload.extend_from_slice(data);
                }
            }
        }
        E2Message::ControlAck(m) => {
            if m.status != AckStatus::Ok && m.applied_rate_bps_hz.to_bits() != 0 {
                return Err(EncodeError::NonzeroRateOnError);
            }
            put_u32(&mut payload, m.ris_id);
            put_u64(&mut payload, m.seq_echo);
            payload.push(m.status as u8);
            put_f64(&mut payload, m.applied_rate_bps_hz);
        }
    }

    if payload.len() > MAX_PAYLOAD_LEN as usize {
        return Err(EncodeError::PayloadTooLarge(payload.len()));
    }
    let mut frame = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(VERSION);
    frame.push(msg.msg_type());
    put_u32(&mut frame, payload.len() as u32);
    frame.extend_from_slice(&payload);
    Ok(frame)
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    msg: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], msg: &'static str) -> Self {
        Self { buf, pos: 0, msg }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::LengthInconsistent { msg: self.msg });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn complex(&mut self) -> Result<Complex64, DecodeError> {
        let re = self.f64()?;
        let im = self.f64()?;
        Ok(Complex64::new(re, im))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError::LengthInconsistent { msg: self.msg })
        }
    }

    fn bad_field(&self, field: &'static str, value: u64) -> DecodeError {
        DecodeError::BadFieldValue {
            msg: self.msg,
            field,
            value,
        }
    }
}

fn decode_setup_status(c: &mut Cursor<'_>) -> Result<SetupStatus, DecodeError> {
    match c.u8()? {
        0 => Ok(SetupStatus::Ok),
        1 => Ok(SetupStatus::Rejected),
        v => Err(c.bad_field("status", u64::from(v))),
    }
}

fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<E2Message, DecodeError> {
    match msg_type {
        MSG_SETUP_REQUEST => {
            let mut c = Cursor::new(payload, "SetupRequest");
            let ris_id = c.u32()?;
            let rows = c.u16()?;
            let cols = c.u16()?;
            let phase_bits = c.u8()?;
            if phase_bits > MAX_PHASE_BITS {
                return Err(c.bad_field("phase_bits", u64::from(phase_bits)));
            }
            let element_aperture_m = c.f64()?;
            let panel_width_m = c.f64()?;
            let panel_height_m = c.f64()?;
            let fc_hz = c.f64()?;
            c.finish()?;
            Ok(E2Message::SetupRequest(SetupRequest {
                ris_id,
                rows,
                cols,
                phase_bits,
                element_aperture_m,
                panel_width_m,
                panel_height_m,
                fc_hz,
            }))
        }
        MSG_SETUP_RESPONSE => {
            let mut c = Cursor::new(payload, "SetupResponse");
            let ris_id = c.u32()?;
            let status = decode_setup_status(&mut c)?;
            c.finish()?;
            Ok(E2Message::SetupResponse(SetupResponse { ris_id, status }))
        }
        MSG_SUBSCRIPTION_REQUEST => {
            let mut c = Cursor::new(payload, "SubscriptionRequest");
            let ris_id = c.u32()?;
            let report_period_ms = c.u32()?;
            c.finish()?;
            Ok(E2Message::SubscriptionRequest(SubscriptionRequest {
                ris_id,
                report_period_ms,
            }))
        }
        MSG_SUBSCRIPTION_RESPONSE => {
            let mut c = Cursor::new(payload, "SubscriptionResponse");
            let ris_id = c.u32()?;
            let status = decode_setup_status(&mut c)?;
            c.finish()?;
            Ok(E2Message::SubscriptionResponse(SubscriptionResponse {
                ris_id,
                status,
            }))
        }
        MSG_INDICATION => {
            let mut c = Cursor::new(payload, "Indication");
            let ris_id = c.u32()?;
            let seq = c.u64()?;
            let n = c.u32()? as usize;
            // Guard the allocation: the declared N must agree with the
            // declared payload length before any vector is reserved.
            let needed = n
                .checked_mul(32)
                .and_then(|v| v.checked_add(4 + 8 + 4 + 16 + 1 + 8));
            if needed != Some(payload.len()) {
                return Err(DecodeError::LengthInconsistent { msg: "Indication" });
            }
            let mut h_br = Vec::with_capacity(n);
            for _ in 0..n {
                h_br.push(c.complex()?);
            }
            let mut h_ru = Vec::with_capacity(n);
            for _ in 0..n {
                h_ru.push(c.complex()?);
            }
            let h_bu = c.complex()?;
            let los = match c.u8()? {
                0 => false,
                1 => true,
                v => return Err(c.bad_field("los_flag", u64::from(v))),
            };
            let timestamp_us = c.u64()?;
            c.finish()?;
            Ok(E2Message::Indication(Indication {
                ris_id,
                seq,
                h_br,
                h_ru,
                h_bu,
                los,
                timestamp_us,
            }))
        }
        MSG_CONTROL_REQUEST => {
            let mut c = Cursor::new(payload, "ControlRequest");
            let ris_id = c.u32()?;
            let seq_echo = c.u64()?;
            let n = c.u32()? as usize;
            let mode = c.u8()?;
            let body = match mode {
                CONTROL_MODE_DISCRETE => {
                    if c.remaining() != n * 2 {
                        return Err(DecodeError::LengthInconsistent {
                            msg: "ControlRequest",
                        });
                    }
                    let mut indices = Vec::with_capacity(n);
                    for _ in 0..n {
                        indices.push(c.u16()?);
                    }
                    ControlPayload::DiscreteIndices(indices)
                }
                CONTROL_MODE_CONTINUOUS => {
                    if c.remaining() != n * 8 {
                        return Err(DecodeError::LengthInconsistent {
                            msg: "ControlRequest",
                        });
                    }
                    let mut values = Vec::with_capacity(n);
                    for _ in 0..n {
                        values.push(c.f64()?);
                    }
                    ControlPayload::ContinuousRadians(values)
                }
                CONTROL_MODE_BEAM_DIRECTION => {
                    let rest = c.take(c.remaining())?.to_vec();
                    ControlPayload::BeamDirection {
                        n: n as u32,
                        data: rest,
                    }
                }
                v => return Err(c.bad_field("mode", u64::from(v))),
            };
            c.finish()?;
            Ok(E2Message::ControlRequest(ControlRequest {
                ris_id,
                seq_echo,
                payload: body,
            }))
        }
        MSG_CONTROL_ACK => {
            let mut c = Cursor::new(payload, "ControlAck");
            let ris_id = c.u32()?;
            let seq_echo = c.u64()?;
            let status_byte = c.u8()?;
            let status = AckStatus::from_byte(status_byte)
                .ok_or_else(|| c.bad_field("status", u64::from(status_byte)))?;
            let applied_rate_bps_hz = c.f64()?;
            if status != AckStatus::Ok && applied_rate_bps_hz.to_bits() != 0 {
                return Err(c.bad_field("applied_rate", applied_rate_bps_hz.to_bits()));
            }
            c.finish()?;
            Ok(E2Message::ControlAck(ControlAck {
                ris_id,
                seq_echo,
                status,
                applied_rate_bps_hz,
            }))
        }
        t => Err(DecodeError::UnknownMsgType(t)),
    }
}

/// Decode exactly one frame from the front of `buf`.
///
/// Returns `NeedMore` while `buf` is a proper prefix of a valid frame.
/// Header fields are checked as soon as their bytes are available, so bad
/// magic or an unknown type is rejected without waiting for (or consuming)
/// the rest of the frame.
pub fn decode(buf: &[u8]) -> Result<Decoded, DecodeError> {
    if !buf.is_empty() && buf[0] != MAGIC[0] {
        return Err(DecodeError::BadMagic);
    }
    if buf.len() >= 2 && buf[1] != MAGIC[1] {
        return Err(DecodeError::BadMagic);
    }
    if buf.len() >= 3 && buf[2] != VERSION {
        return Err(DecodeError::UnsupportedVersion(buf[2]));
    }
    if buf.len() >= 4 && !(MSG_SETUP_REQUEST..=MSG_CONTROL_ACK).contains(&buf[3]) {
        return Err(DecodeError::UnknownMsgType(buf[3]));
    }
    if buf.len() < FRAME_HEADER_LEN {
        return Ok(Decoded::NeedMore);
    }
    let declared = u32::from_be_bytes(buf[4..8].try_into().unwrap());
    if declared > MAX_PAYLOAD_LEN {
        return Err(DecodeError::PayloadTooLarge(declared));
    }
    let total = FRAME_HEADER_LEN + declared as usize;
    if buf.len() < total {
        return Ok(Decoded::NeedMore);
    }
    let msg = decode_payload(buf[3], &buf[FRAME_HEADER_LEN..total])?;
    Ok(Decoded::Message {
        msg,
        consumed: total,
    })
}

/// Buffering decoder for one connection: feed bytes in, drain messages out.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pop the next complete message, if the buffer holds one.
    pub fn next_message(&mut self) -> Result<Option<E2Message>, DecodeError> {
        match decode(&self.buf)? {
            Decoded::Message { msg, consumed } => {
                self.buf.drain(..consumed);
                Ok(Some(msg))
            }
            Decoded::NeedMore => Ok(None),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
