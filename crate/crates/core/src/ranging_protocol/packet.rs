//! The 17-byte ranging frame.
//!
//! ```text
//!  0      4      8          12    13      15    17
//!  | pre  | sync | latency  | rssi | addr  | crc |
//! ```
//!
//! Multi-byte fields are big-endian. The CRC is CRC-16/CCITT-FALSE over the
//! seven data bytes.

use thiserror::Error;

pub const PACKET_LEN: usize = 17;
pub const PREAMBLE: [u8; 4] = [0xAA; 4];
/// Preamble plus sync word: the part of the frame clocked out before the sync flag rises.
pub const HEADER_LEN: usize = 8;
const DATA: std::ops::Range<usize> = 8..15;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame is {0} bytes, expected 17")]
    Length(usize),
    #[error("preamble corrupted")]
    Preamble,
    #[error("sync word mismatch")]
    SyncMismatch,
    #[error("crc mismatch: computed {computed:#06x}, frame carries {carried:#06x}")]
    CrcFailure { computed: u16, carried: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangingPacket {
    pub sync_word: [u8; 4],
    /// Slave-side t2 - t1 in cycles; zero on requests.
    pub latency_cycles: u32,
    /// dBm
    pub rssi: i8,
    pub address: u16,
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    data.iter().fold(0xFFFF_u16, |mut crc, &byte| {
        crc ^= u16::from(byte) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
        crc
    })
}

impl RangingPacket {
    pub fn encode(&self) -> [u8; PACKET_LEN] {
        let mut out = [0u8; PACKET_LEN];
        out[0..4].copy_from_slice(&PREAMBLE);
        out[4..8].copy_from_slice(&self.sync_word);
        out[8..12].copy_from_slice(&self.latency_cycles.to_be_bytes());
        out[12] = self.rssi as u8;
        out[13..15].copy_from_slice(&self.address.to_be_bytes());
        let crc = crc16_ccitt_false(&out[DATA]);
        out[15..17].copy_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8], expected_sync: [u8; 4]) -> Result<Self, FrameError> {
        if bytes.len() != PACKET_LEN {
            return Err(FrameError::Length(bytes.len()));
        }
        if bytes[0..4] != PREAMBLE {
            return Err(FrameError::Preamble);
        }
        if bytes[4..8] != expected_sync {
            return Err(FrameError::SyncMismatch);
        }
        let computed = crc16_ccitt_false(&bytes[DATA]);
        let carried = u16::from_be_bytes([bytes[15], bytes[16]]);
        if computed != carried {
            return Err(FrameError::CrcFailure { computed, carried });
        }
        Ok(Self {
            sync_word: expected_sync,
            latency_cycles: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
            rssi: bytes[12] as i8,
            address: u16::from_be_bytes([bytes[13], bytes[14]]),
        })
    }
}

pub fn encode_packet(p: &RangingPacket) -> [u8; PACKET_LEN] {
    p.encode()
}

pub fn decode_packet(bytes: &[u8], expected_sync: [u8; 4]) -> Result<RangingPacket, FrameError> {
    RangingPacket::decode(bytes, expected_sync)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SYNC: [u8; 4] = [0xD3, 0x91, 0xD3, 0x91];

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
    }

    #[test]
    fn zero_payload() {
        let p = RangingPacket { sync_word: SYNC, latency_cycles: 0, rssi: 0, address: 0 };
        let f = p.encode();
        assert_eq!(f.len(), 17);
        assert_eq!(&f[8..15], &[0u8; 7]);
        assert_eq!(u16::from_be_bytes([f[15], f[16]]), crc16_ccitt_false(&[0u8; 7]));
        assert_eq!(decode_packet(&f, SYNC).unwrap(), p);
    }

    #[test]
    fn layout_is_big_endian() {
        let p = RangingPacket {
            sync_word: SYNC,
            latency_cycles: 0x0102_0304,
            rssi: -60,
            address: 0xBEEF,
        };
        let f = encode_packet(&p);
        assert_eq!(&f[0..4], &PREAMBLE);
        assert_eq!(&f[4..8], &SYNC);
        assert_eq!(&f[8..15], &[1, 2, 3, 4, 0xC4, 0xBE, 0xEF]);
    }

    #[test]
    fn wrong_sync_and_length() {
        let p = RangingPacket { sync_word: SYNC, latency_cycles: 7, rssi: -3, address: 2 };
        let f = p.encode();
        assert_eq!(decode_packet(&f, [0; 4]), Err(FrameError::SyncMismatch));
        assert_eq!(decode_packet(&f[..16], SYNC), Err(FrameError::Length(16)));
    }

    proptest! {
        #[test]
        fn roundtrip(lat in any::<u32>(), rssi in any::<i8>(), addr in any::<u16>(), sync in any::<[u8; 4]>()) {
            let p = RangingPacket { sync_word: sync, latency_cycles: lat, rssi, address: addr };
            prop_assert_eq!(decode_packet(&p.encode(), sync).unwrap(), p);
        }

        #[test]
        fn any_single_bit_flip_is_rejected(lat in any::<u32>(), rssi in any::<i8>(), addr in any::<u16>(), bit in 0usize..136) {
            let p = RangingPacket { sync_word: SYNC, latency_cycles: lat, rssi, address: addr };
            let mut f = p.encode();
            f[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(decode_packet(&f, SYNC).is_err());
        }
    }
}
