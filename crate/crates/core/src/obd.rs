//! OBD-II mode 01 / PID 0x0D (vehicle speed) over CAN.

use crate::canlog::{CanFrame, Timestamp};

pub const REQUEST_ID: u16 = 0x7DF;
pub const RESPONSE_IDS: std::ops::RangeInclusive<u16> = 0x7E8..=0x7EF;
pub const MODE_CURRENT_DATA: u8 = 0x01;
pub const MODE_RESPONSE_OFFSET: u8 = 0x40;
pub const PID_VEHICLE_SPEED: u8 = 0x0D;
const PADDING: u8 = 0xAA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObdSpeedReading {
    pub timestamp: Timestamp,
    /// km/h, single-byte encoding.
    pub speed_kmh: u8,
}

impl ObdSpeedReading {
    pub fn speed_mps(&self) -> f64 {
        f64::from(self.speed_kmh) / 3.6
    }
}

/// `7DF#02010DAAAAAAAAAA`: two payload bytes, mode 01, PID 0D, 0xAA padding.
pub fn encode_speed_request(timestamp: Timestamp, interface: &str) -> CanFrame {
    let mut data = [PADDING; 8];
    data[..3].copy_from_slice(&[0x02, MODE_CURRENT_DATA, PID_VEHICLE_SPEED]);
    CanFrame::new(timestamp, interface, REQUEST_ID, &data)
}

/// Response an ECU would send for `speed_kmh`, from responder `id`.
pub fn encode_speed_response(timestamp: Timestamp, interface: &str, id: u16, speed_kmh: u8) -> CanFrame {
    let mut data = [PADDING; 8];
    data[..4].copy_from_slice(&[
        0x03,
        MODE_CURRENT_DATA + MODE_RESPONSE_OFFSET,
        PID_VEHICLE_SPEED,
        speed_kmh,
    ]);
    CanFrame::new(timestamp, interface, id, &data)
}

/// Returns `None` for anything that is not a well-formed speed response.
pub fn decode_speed_response(frame: &CanFrame) -> Option<ObdSpeedReading> {
    if !RESPONSE_IDS.contains(&frame.id) || frame.data.len() < 4 {
        return None;
    }
    if frame.data[1] != MODE_CURRENT_DATA + MODE_RESPONSE_OFFSET || frame.data[2] != PID_VEHICLE_SPEED {
        return None;
    }
    Some(ObdSpeedReading {
        timestamp: frame.timestamp,
        speed_kmh: frame.data[3],
    })
}
