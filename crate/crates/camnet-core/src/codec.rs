//! CAM frame model, the binary wire codec, and the TX/RX log formats.
//!
//! Two serializations live here and they are deliberately different:
//!
//! * the wire codec ([`encode_cam`] / [`decode_cam`]) is a fixed-length
//!   little-endian layout carrying full-precision floats, used by the
//!   simulator as the broadcast payload prefix;
//! * the log formats ([`TxLogRecord`] / [`RxLogRecord`]) are the
//!   comma-separated line formats written by the field devices, with
//!   coordinates at 7 decimal places and speeds/heading at 2. Log records
//!   quantize to exactly that precision when constructed, which is what
//!   makes `parse(format(r)) == r` hold exactly.
//!
//! Readers accept both headered and headerless files with the same column
//! order, so logs captured by the original recorders load unchanged.

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Errors for frame and log-record encoding, decoding and parsing.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed frame: expected {expected} bytes, got {got}")]
    MalformedFrame { expected: usize, got: usize },
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("line {line}: expected {expected} columns, got {got}")]
    ColumnCount { line: usize, expected: usize, got: usize },
    #[error("line {line}, column {column}: cannot parse {value:?}")]
    Value { line: usize, column: &'static str, value: String },
    #[error("unrecognized header {found:?} (expected {expected:?})")]
    Header { found: String, expected: &'static str },
    #[error("receiver cannot log its own MAC {0}")]
    OwnMac(MacAddr),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ============================================================================
// Identifiers
// ============================================================================

/// 48-bit IEEE MAC address. Each radio (NIC) owns one.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Parses the canonical colon-separated hex form, e.g. `02:00:00:00:01:0a`.
    pub fn parse(s: &str) -> Result<Self, CodecError> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| invalid_mac(s))?;
            if part.len() != 2 {
                return Err(invalid_mac(s));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| invalid_mac(s))?;
        }
        if parts.next().is_some() {
            return Err(invalid_mac(s));
        }
        Ok(MacAddr(out))
    }
}

fn invalid_mac(s: &str) -> CodecError {
    CodecError::InvalidField {
        field: "mac",
        reason: format!("not a MAC address: {s:?}"),
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddr({self})")
    }
}

/// Which of the two radios a frame was sent on. The high-power NIC sits on
/// 5.9 GHz, the low-power NIC on 5.89 GHz; the channels never interfere.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum NicId {
    Hp,
    Lp,
}

impl NicId {
    pub const ALL: [NicId; 2] = [NicId::Hp, NicId::Lp];

    /// Log column spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            NicId::Hp => "HP",
            NicId::Lp => "LP",
        }
    }

    /// Lowercase tag used in log file names (`<node>_<nic>_tx.log`).
    pub fn file_tag(self) -> &'static str {
        match self {
            NicId::Hp => "hp",
            NicId::Lp => "lp",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CodecError> {
        match s {
            "HP" | "hp" => Ok(NicId::Hp),
            "LP" | "lp" => Ok(NicId::Lp),
            other => Err(CodecError::InvalidField {
                field: "nic",
                reason: format!("expected HP or LP, got {other:?}"),
            }),
        }
    }

    fn wire_byte(self) -> u8 {
        match self {
            NicId::Hp => 0,
            NicId::Lp => 1,
        }
    }

    fn from_wire_byte(b: u8) -> Result<Self, CodecError> {
        match b {
            0 => Ok(NicId::Hp),
            1 => Ok(NicId::Lp),
            other => Err(CodecError::InvalidField {
                field: "nic",
                reason: format!("wire byte {other} is not a NIC id"),
            }),
        }
    }
}

impl fmt::Display for NicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ============================================================================
// CAM frame and wire codec
// ============================================================================

/// One cooperative awareness message as put on the air.
///
/// `gps_*` carry the most recent raw GPS fix known to the sender at
/// generation time; `inter_*` carry the position and speed interpolated to
/// the exact generation instant. `seq_num` starts at zero when a device
/// boots and increases by one per frame per NIC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CamFrame {
    pub src_mac: MacAddr,
    pub nic_id: NicId,
    pub seq_num: u32,
    pub gps_lon: f64,
    pub gps_lat: f64,
    pub inter_lon: f64,
    pub inter_lat: f64,
    /// Meters per second, from the raw fix.
    pub gps_speed: f64,
    /// Meters per second, interpolated to the generation instant.
    pub inter_speed: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub heading: f64,
    /// Generation time, microseconds.
    pub timestamp_us: u64,
}

/// Encoded size of one frame: 6 (mac) + 1 (nic) + 4 (seq) + 7*8 (floats)
/// + 8 (timestamp).
pub const CAM_WIRE_LEN: usize = 75;

impl CamFrame {
    /// Checks the field invariants: latitudes in [-90, 90], longitudes in
    /// [-180, 180], speeds non-negative, heading in [0, 360). NaN fails
    /// every range check.
    pub fn validate(&self) -> Result<(), CodecError> {
        check_range("gps_lat", self.gps_lat, -90.0, 90.0)?;
        check_range("inter_lat", self.inter_lat, -90.0, 90.0)?;
        check_range("gps_lon", self.gps_lon, -180.0, 180.0)?;
        check_range("inter_lon", self.inter_lon, -180.0, 180.0)?;
        if self.gps_speed < 0.0 || !self.gps_speed.is_finite() {
            return Err(invalid_number("gps_speed", self.gps_speed));
        }
        if self.inter_speed < 0.0 || !self.inter_speed.is_finite() {
            return Err(invalid_number("inter_speed", self.inter_speed));
        }
        if !(self.heading >= 0.0 && self.heading < 360.0) {
            return Err(invalid_number("heading", self.heading));
        }
        Ok(())
    }
}

fn check_range(field: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), CodecError> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(invalid_number(field, v))
    }
}

fn invalid_number(field: &'static str, v: f64) -> CodecError {
    CodecError::InvalidField {
        field,
        reason: format!("value {v} out of range"),
    }
}

/// Serializes a frame into the fixed-length little-endian wire layout.
/// Invariants are enforced at frame construction, so this cannot fail.
pub fn encode_cam(frame: &CamFrame) -> [u8; CAM_WIRE_LEN] {
    let mut out = [0u8; CAM_WIRE_LEN];
    out[0..6].copy_from_slice(&frame.src_mac.0);
    out[6] = frame.nic_id.wire_byte();
    out[7..11].copy_from_slice(&frame.seq_num.to_le_bytes());
    let floats = [
        frame.gps_lon,
        frame.gps_lat,
        frame.inter_lon,
        frame.inter_lat,
        frame.gps_speed,
        frame.inter_speed,
        frame.heading,
    ];
    for (i, v) in floats.iter().enumerate() {
        let at = 11 + i * 8;
        out[at..at + 8].copy_from_slice(&v.to_le_bytes());
    }
    out[67..75].copy_from_slice(&frame.timestamp_us.to_le_bytes());
    out
}

/// Decodes and validates one frame. Rejects wrong lengths, unknown NIC
/// bytes and out-of-range field values.
pub fn decode_cam(bytes: &[u8]) -> Result<CamFrame, CodecError> {
    if bytes.len() != CAM_WIRE_LEN {
        return Err(CodecError::MalformedFrame {
            expected: CAM_WIRE_LEN,
            got: bytes.len(),
        });
    }
    let mut mac = [0u8; 6];
    mac.copy_from_slice(&bytes[0..6]);
    let nic_id = NicId::from_wire_byte(bytes[6])?;
    let seq_num = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let mut floats = [0f64; 7];
    for (i, v) in floats.iter_mut().enumerate() {
        let at = 11 + i * 8;
        *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    }
    let timestamp_us = u64::from_le_bytes(bytes[67..75].try_into().unwrap());
    let frame = CamFrame {
        src_mac: MacAddr(mac),
        nic_id,
        seq_num,
        gps_lon: floats[0],
        gps_lat: floats[1],
        inter_lon: floats[2],
        inter_lat: floats[3],
        gps_speed: floats[4],
        inter_speed: floats[5],
        heading: floats[6],
        timestamp_us,
    };
    frame.validate()?;
    Ok(frame)
}

// ============================================================================
// Log record quantization and number formatting
// ============================================================================

const COORD_SCALE: f64 = 1e7;
const RATE_SCALE: f64 = 1e2;

/// Rounds to the serialized precision. `scale` is a power of ten, so the
/// result formats and re-parses to the identical f64.
fn quantize(v: f64, scale: f64) -> f64 {
    (v * scale).round() / scale
}

fn parse_finite(line: usize, column: &'static str, s: &str) -> Result<f64, CodecError> {
    let v: f64 = s.trim().parse().map_err(|_| CodecError::Value {
        line,
        column,
        value: s.to_string(),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CodecError::Value {
            line,
            column,
            value: s.to_string(),
        })
    }
}

fn parse_u64(line: usize, column: &'static str, s: &str) -> Result<u64, CodecError> {
    s.trim().parse().map_err(|_| CodecError::Value {
        line,
        column,
        value: s.to_string(),
    })
}

fn parse_u32(line: usize, column: &'static str, s: &str) -> Result<u32, CodecError> {
    s.trim().parse().map_err(|_| CodecError::Value {
        line,
        column,
        value: s.to_string(),
    })
}

// ============================================================================
// TX log records
// ============================================================================

/// One line of a device's transmit log: everything that went into the frame.
/// Written once per generated frame, whether or not the MAC ever got it on
/// the air, so the TX log doubles as the generation log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TxLogRecord {
    pub gps_lon: f64,
    pub gps_lat: f64,
    pub inter_lon: f64,
    pub inter_lat: f64,
    pub seq_num: u32,
    pub gps_speed: f64,
    pub inter_speed: f64,
    /// Frame generation time, microseconds.
    pub timestamp_us: u64,
    pub src_mac: MacAddr,
    pub nic_id: NicId,
    pub heading: f64,
}

pub const TX_LOG_HEADER: &str = "GpsLongitude,GpsLatitude,InterLongitude,InterLatitude,SeqNum,GpsSpeed,InterSpeed,Timestamp,SrcMac,Nic,Heading";
const TX_COLUMNS: usize = 11;

impl TxLogRecord {
    /// Builds the log record for a generated frame, quantizing to the
    /// serialized precision.
    pub fn from_frame(frame: &CamFrame) -> Self {
        TxLogRecord {
            gps_lon: quantize(frame.gps_lon, COORD_SCALE),
            gps_lat: quantize(frame.gps_lat, COORD_SCALE),
            inter_lon: quantize(frame.inter_lon, COORD_SCALE),
            inter_lat: quantize(frame.inter_lat, COORD_SCALE),
            seq_num: frame.seq_num,
            gps_speed: quantize(frame.gps_speed, RATE_SCALE),
            inter_speed: quantize(frame.inter_speed, RATE_SCALE),
            timestamp_us: frame.timestamp_us,
            src_mac: frame.src_mac,
            nic_id: frame.nic_id,
            heading: quantize(frame.heading, RATE_SCALE),
        }
    }

    pub fn format_line(&self) -> String {
        format!(
            "{:.7},{:.7},{:.7},{:.7},{},{:.2},{:.2},{},{},{},{:.2}",
            self.gps_lon,
            self.gps_lat,
            self.inter_lon,
            self.inter_lat,
            self.seq_num,
            self.gps_speed,
            self.inter_speed,
            self.timestamp_us,
            self.src_mac,
            self.nic_id,
            self.heading
        )
    }

    /// Parses one data line. `line` is the 1-based line number used in
    /// error messages.
    pub fn parse_line(line_no: usize, line: &str) -> Result<Self, CodecError> {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != TX_COLUMNS {
            return Err(CodecError::ColumnCount {
                line: line_no,
                expected: TX_COLUMNS,
                got: cols.len(),
            });
        }
        Ok(TxLogRecord {
            gps_lon: parse_finite(line_no, "GpsLongitude", cols[0])?,
            gps_lat: parse_finite(line_no, "GpsLatitude", cols[1])?,
            inter_lon: parse_finite(line_no, "InterLongitude", cols[2])?,
            inter_lat: parse_finite(line_no, "InterLatitude", cols[3])?,
            seq_num: parse_u32(line_no, "SeqNum", cols[4])?,
            gps_speed: parse_finite(line_no, "GpsSpeed", cols[5])?,
            inter_speed: parse_finite(line_no, "InterSpeed", cols[6])?,
            timestamp_us: parse_u64(line_no, "Timestamp", cols[7])?,
            src_mac: MacAddr::parse(cols[8].trim())?,
            nic_id: NicId::parse(cols[9].trim())?,
            heading: parse_finite(line_no, "Heading", cols[10])?,
        })
    }
}

// ============================================================================
// RX log records
// ============================================================================

/// One line of a device's receive log. `rx_mac` and `rx_lon`/`rx_lat` are
/// the transmitter's NIC MAC and interpolated position as carried in the
/// frame; `inter_lon`/`inter_lat` are the receiver's own position at
/// reception time. Speeds are copied from the frame. `timestamp_us` is the
/// reception time and `local_rx_time_us` the receiver clock at reception
/// (identical in simulation, which models no clock skew).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RxLogRecord {
    pub rx_mac: MacAddr,
    pub rx_lon: f64,
    pub rx_lat: f64,
    pub inter_lon: f64,
    pub inter_lat: f64,
    pub seq_num: u32,
    pub gps_speed: f64,
    pub inter_speed: f64,
    pub timestamp_us: u64,
    pub local_rx_time_us: u64,
}

pub const RX_LOG_HEADER: &str =
    "RxMAC,RxLongitude,RxLatitude,InterLongitude,InterLatitude,SeqNum,GpsSpeed,InterSpeed,Timestamp,LocalRxTime";
const RX_COLUMNS: usize = 10;

impl RxLogRecord {
    /// Builds the receive-side record for a delivered frame. A frame whose
    /// source MAC equals the receiver's own is rejected; the node agent
    /// treats that as a silent discard.
    pub fn new(
        receiver_mac: MacAddr,
        frame: &CamFrame,
        receiver_lat: f64,
        receiver_lon: f64,
        rx_time_us: u64,
    ) -> Result<Self, CodecError> {
        if frame.src_mac == receiver_mac {
            return Err(CodecError::OwnMac(receiver_mac));
        }
        Ok(RxLogRecord {
            rx_mac: frame.src_mac,
            rx_lon: quantize(frame.inter_lon, COORD_SCALE),
            rx_lat: quantize(frame.inter_lat, COORD_SCALE),
            inter_lon: quantize(receiver_lon, COORD_SCALE),
            inter_lat: quantize(receiver_lat, COORD_SCALE),
            seq_num: frame.seq_num,
            gps_speed: quantize(frame.gps_speed, RATE_SCALE),
            inter_speed: quantize(frame.inter_speed, RATE_SCALE),
            timestamp_us: rx_time_us,
            local_rx_time_us: rx_time_us,
        })
    }

    pub fn format_line(&self) -> String {
        format!(
            "{},{:.7},{:.7},{:.7},{:.7},{},{:.2},{:.2},{},{}",
            self.rx_mac,
            self.rx_lon,
            self.rx_lat,
            self.inter_lon,
            self.inter_lat,
            self.seq_num,
            self.gps_speed,
            self.inter_speed,
            self.timestamp_us,
            self.local_rx_time_us
        )
    }

    pub fn parse_line(line_no: usize, line: &str) -> Result<Self, CodecError> {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != RX_COLUMNS {
            return Err(CodecError::ColumnCount {
                line: line_no,
                expected: RX_COLUMNS,
                got: cols.len(),
            });
        }
        Ok(RxLogRecord {
            rx_mac: MacAddr::parse(cols[0].trim())?,
            rx_lon: parse_finite(line_no, "RxLongitude", cols[1])?,
            rx_lat: parse_finite(line_no, "RxLatitude", cols[2])?,
            inter_lon: parse_finite(line_no, "InterLongitude", cols[3])?,
            inter_lat: parse_finite(line_no, "InterLatitude", cols[4])?,
            seq_num: parse_u32(line_no, "SeqNum", cols[5])?,
            gps_speed: parse_finite(line_no, "GpsSpeed", cols[6])?,
            inter_speed: parse_finite(line_no, "InterSpeed", cols[7])?,
            timestamp_us: parse_u64(line_no, "Timestamp", cols[8])?,
            local_rx_time_us: parse_u64(line_no, "LocalRxTime", cols[9])?,
        })
    }
}

// ============================================================================
// Whole-file helpers
// ============================================================================

/// UTF-8, LF line endings, header row first.
pub fn format_tx_log(records: &[TxLogRecord]) -> String {
    let mut out = String::with_capacity(32 + records.len() * 120);
    out.push_str(TX_LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.format_line());
        out.push('\n');
    }
    out
}

pub fn format_rx_log(records: &[RxLogRecord]) -> String {
    let mut out = String::with_capacity(32 + records.len() * 120);
    out.push_str(RX_LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.format_line());
        out.push('\n');
    }
    out
}

/// Leading header row is optional (the original recorders wrote none); a
/// present header must match the canonical column order. CR line endings
/// are tolerated.
pub fn parse_tx_log(text: &str) -> Result<Vec<TxLogRecord>, CodecError> {
    parse_log(
        text,
        TX_LOG_HEADER,
        |first| first.parse::<f64>().is_ok(),
        TxLogRecord::parse_line,
    )
}

pub fn parse_rx_log(text: &str) -> Result<Vec<RxLogRecord>, CodecError> {
    parse_log(
        text,
        RX_LOG_HEADER,
        |first| MacAddr::parse(first).is_ok(),
        RxLogRecord::parse_line,
    )
}

fn parse_log<R>(
    text: &str,
    header: &'static str,
    first_field_is_data: impl Fn(&str) -> bool,
    parse: impl Fn(usize, &str) -> Result<R, CodecError>,
) -> Result<Vec<R>, CodecError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            let first = line.split(',').next().unwrap_or("").trim();
            if !first_field_is_data(first) {
                if line != header {
                    return Err(CodecError::Header {
                        found: line.to_string(),
                        expected: header,
                    });
                }
                continue;
            }
        }
        out.push(parse(idx + 1, line)?);
    }
    Ok(out)
}

pub fn load_tx_log(path: &Path) -> Result<Vec<TxLogRecord>, CodecError> {
    parse_tx_log(&std::fs::read_to_string(path)?)
}

pub fn load_rx_log(path: &Path) -> Result<Vec<RxLogRecord>, CodecError> {
    parse_rx_log(&std::fs::read_to_string(path)?)
}

pub fn write_tx_log(path: &Path, records: &[TxLogRecord]) -> Result<(), CodecError> {
    Ok(std::fs::write(path, format_tx_log(records))?)
}

pub fn write_rx_log(path: &Path, records: &[RxLogRecord]) -> Result<(), CodecError> {
    Ok(std::fs::write(path, format_rx_log(records))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_frame() -> CamFrame {
        CamFrame {
            src_mac: MacAddr([0x02, 0x00, 0x00, 0x00, 0x01, 0x00]),
            nic_id: NicId::Hp,
            seq_num: 42,
            gps_lon: -2.5879,
            gps_lat: 51.4545,
            inter_lon: -2.5878321,
            inter_lat: 51.4545567,
            gps_speed: 13.89,
            inter_speed: 13.91,
            heading: 87.25,
            timestamp_us: 1_234_567,
        }
    }

    #[test]
    fn wire_len_is_75() {
        assert_eq!(CAM_WIRE_LEN, 75);
        assert_eq!(encode_cam(&sample_frame()).len(), 75);
    }

    #[test]
    fn wire_round_trip_is_bit_exact() {
        let frame = sample_frame();
        let decoded = decode_cam(&encode_cam(&frame)).unwrap();
        assert_eq!(decoded, frame);
        assert_eq!(decoded.gps_lat.to_bits(), frame.gps_lat.to_bits());
    }

    #[test]
    fn wire_rejects_wrong_length() {
        assert!(matches!(
            decode_cam(&[]),
            Err(CodecError::MalformedFrame { expected: 75, got: 0 })
        ));
        let bytes = encode_cam(&sample_frame());
        assert!(decode_cam(&bytes[..74]).is_err());
    }

    #[test]
    fn wire_rejects_unknown_nic_byte() {
        let mut bytes = encode_cam(&sample_frame());
        bytes[6] = 9;
        assert!(matches!(
            decode_cam(&bytes),
            Err(CodecError::InvalidField { field: "nic", .. })
        ));
    }

    #[test]
    fn wire_rejects_out_of_range_latitude() {
        let mut bytes = encode_cam(&sample_frame());
        bytes[19..27].copy_from_slice(&91.0f64.to_le_bytes());
        assert!(matches!(
            decode_cam(&bytes),
            Err(CodecError::InvalidField { field: "gps_lat", .. })
        ));
    }

    #[test]
    fn validate_enforces_ranges() {
        let mut f = sample_frame();
        assert!(f.validate().is_ok());
        f.heading = 360.0;
        assert!(f.validate().is_err());
        f = sample_frame();
        f.gps_speed = -0.1;
        assert!(f.validate().is_err());
        f = sample_frame();
        f.inter_lat = f64::NAN;
        assert!(f.validate().is_err());
        f = sample_frame();
        f.gps_lat = 90.0;
        f.gps_lon = -180.0;
        assert!(f.validate().is_ok());
    }

    #[test]
    fn tx_line_format_is_stable() {
        let rec = TxLogRecord::from_frame(&sample_frame());
        assert_eq!(
            rec.format_line(),
            "-2.5879000,51.4545000,-2.5878321,51.4545567,42,13.89,13.91,1234567,02:00:00:00:01:00,HP,87.25"
        );
    }

    #[test]
    fn tx_round_trip_exact() {
        let rec = TxLogRecord::from_frame(&sample_frame());
        let parsed = TxLogRecord::parse_line(1, &rec.format_line()).unwrap();
        assert_eq!(parsed, rec);
    }

    #[test]
    fn rx_round_trip_exact() {
        let rec = RxLogRecord::new(
            MacAddr([0x02, 0, 0, 0, 2, 0]),
            &sample_frame(),
            51.4550001,
            -2.5870002,
            1_240_000,
        )
        .unwrap();
        let parsed = RxLogRecord::parse_line(1, &rec.format_line()).unwrap();
        assert_eq!(parsed, rec);
    }

    #[test]
    fn rx_rejects_receiver_own_mac() {
        let frame = sample_frame();
        assert!(matches!(
            RxLogRecord::new(frame.src_mac, &frame, 51.0, -2.0, 0),
            Err(CodecError::OwnMac(_))
        ));
    }

    #[test]
    fn rx_record_carries_frame_inter_position() {
        let frame = sample_frame();
        let rec = RxLogRecord::new(MacAddr([9; 6]), &frame, 51.46, -2.59, 99).unwrap();
        assert_eq!(rec.rx_lon, frame.inter_lon);
        assert_eq!(rec.rx_lat, frame.inter_lat);
        assert_eq!(rec.timestamp_us, 99);
        assert_eq!(rec.local_rx_time_us, 99);
    }

    #[test]
    fn log_files_parse_with_and_without_header() {
        let recs = vec![
            TxLogRecord::from_frame(&sample_frame()),
            TxLogRecord::from_frame(&CamFrame {
                seq_num: 43,
                timestamp_us: 1_246_600,
                ..sample_frame()
            }),
        ];
        let with_header = format_tx_log(&recs);
        assert!(with_header.starts_with(TX_LOG_HEADER));
        let headerless: String = with_header.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(parse_tx_log(&with_header).unwrap(), recs);
        assert_eq!(parse_tx_log(&headerless).unwrap(), recs);
    }

    #[test]
    fn unknown_header_is_rejected() {
        let err = parse_tx_log("Foo,Bar\n").unwrap_err();
        assert!(matches!(err, CodecError::Header { .. }));
    }

    #[test]
    fn column_count_error_names_line() {
        let text = format!("{}\n1.0,2.0,3.0\n", TX_LOG_HEADER);
        match parse_tx_log(&text).unwrap_err() {
            CodecError::ColumnCount { line, expected, got } => {
                assert_eq!((line, expected, got), (2, 11, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_value_error_names_column() {
        let rec = TxLogRecord::from_frame(&sample_frame());
        let line = rec.format_line().replace("13.89", "fast");
        match TxLogRecord::parse_line(7, &line).unwrap_err() {
            CodecError::Value { line, column, .. } => {
                assert_eq!(line, 7);
                assert_eq!(column, "GpsSpeed");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nan_text_is_rejected() {
        let rec = TxLogRecord::from_frame(&sample_frame());
        let line = rec.format_line().replace("13.89", "NaN");
        assert!(TxLogRecord::parse_line(1, &line).is_err());
    }

    #[test]
    fn max_timestamp_survives_round_trips() {
        let mut frame = sample_frame();
        frame.timestamp_us = u64::MAX;
        assert_eq!(decode_cam(&encode_cam(&frame)).unwrap(), frame);
        let rec = TxLogRecord::from_frame(&frame);
        let parsed = TxLogRecord::parse_line(1, &rec.format_line()).unwrap();
        assert_eq!(parsed.timestamp_us, u64::MAX);
    }

    #[test]
    fn mac_parse_round_trip() {
        let mac = MacAddr([0xde, 0xad, 0xbe, 0xef, 0x00, 0x7f]);
        assert_eq!(MacAddr::parse(&mac.to_string()).unwrap(), mac);
        assert!(MacAddr::parse("de:ad:be:ef:00").is_err());
        assert!(MacAddr::parse("de:ad:be:ef:00:7f:00").is_err());
        assert!(MacAddr::parse("zz:ad:be:ef:00:7f").is_err());
    }

    prop_compose! {
        fn arb_frame()(
            mac in any::<[u8; 6]>(),
            nic in 0u8..2,
            seq in any::<u32>(),
            gps_lon in -180.0f64..=180.0,
            gps_lat in -90.0f64..=90.0,
            inter_lon in -180.0f64..=180.0,
            inter_lat in -90.0f64..=90.0,
            gps_speed in 0.0f64..120.0,
            inter_speed in 0.0f64..120.0,
            heading in 0.0f64..360.0,
            ts in any::<u64>(),
        ) -> CamFrame {
            CamFrame {
                src_mac: MacAddr(mac),
                nic_id: if nic == 0 { NicId::Hp } else { NicId::Lp },
                seq_num: seq,
                gps_lon, gps_lat, inter_lon, inter_lat,
                gps_speed, inter_speed, heading,
                timestamp_us: ts,
            }
        }
    }

    proptest! {
        #[test]
        fn prop_wire_round_trip(frame in arb_frame()) {
            prop_assume!(frame.validate().is_ok());
            prop_assert_eq!(decode_cam(&encode_cam(&frame)).unwrap(), frame);
        }

        #[test]
        fn prop_tx_line_round_trip(frame in arb_frame()) {
            prop_assume!(frame.validate().is_ok());
            let rec = TxLogRecord::from_frame(&frame);
            let parsed = TxLogRecord::parse_line(1, &rec.format_line()).unwrap();
            prop_assert_eq!(parsed, rec);
        }

        #[test]
        fn prop_rx_line_round_trip(frame in arb_frame(), rx_lat in -90.0f64..=90.0, rx_lon in -180.0f64..=180.0, t in any::<u64>()) {
            prop_assume!(frame.validate().is_ok());
            prop_assume!(frame.src_mac != MacAddr([0xff; 6]));
            let rec = RxLogRecord::new(MacAddr([0xff; 6]), &frame, rx_lat, rx_lon, t).unwrap();
            let parsed = RxLogRecord::parse_line(1, &rec.format_line()).unwrap();
            prop_assert_eq!(parsed, rec);
        }
    }
}
