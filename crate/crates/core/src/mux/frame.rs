use serde::{Deserialize, Serialize};

use super::MuxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Opcode {
    Open = 0,
    Close = 1,
    SelectBank = 2,
    DebugReadback = 3,
}

impl Opcode {
    fn from_bits(b: u32) -> Self {
        match b & 0b11 {
            0 => Self::Open,
            1 => Self::Close,
            2 => Self::SelectBank,
            _ => Self::DebugReadback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub address: u32,
    pub opcode: Opcode,
}

/// Layout of a command frame: `sync | address | opcode(2) | checksum(2)`, MSB first.
///
/// The two checksum bits are the parities of the even and odd positions of the
/// address+opcode payload, so any single flipped bit is caught.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFormat {
    pub sync_bits: u32,
    pub sync_pattern: u32,
    pub address_bits: u32,
    pub clock_hz: f64,
    /// Number of addressable outputs.
    pub electrode_count: u32,
}

const OPCODE_BITS: u32 = 2;
const CHECKSUM_BITS: u32 = 2;

impl Default for FrameFormat {
    fn default() -> Self {
        Self {
            sync_bits: 4,
            sync_pattern: 0b1010,
            address_bits: 8,
            clock_hz: 500e3,
            electrode_count: 199,
        }
    }
}

impl FrameFormat {
    pub fn validate(&self) -> Result<(), MuxError> {
        if self.sync_bits == 0 || self.address_bits == 0 || self.bit_len() > 32 {
            return Err(MuxError::Config(format!(
                "frame widths sync={} address={} do not fit a 32-bit word",
                self.sync_bits, self.address_bits
            )));
        }
        if self.sync_pattern >= 1 << self.sync_bits {
            return Err(MuxError::Config("sync pattern wider than its field".into()));
        }
        if !(self.clock_hz > 0.0) {
            return Err(MuxError::Config("clock must be positive".into()));
        }
        if u64::from(self.electrode_count) > 1u64 << self.address_bits {
            return Err(MuxError::Config(format!(
                "{} outputs need more than {} address bits",
                self.electrode_count, self.address_bits
            )));
        }
        Ok(())
    }

    /// Frame length in bits.
    pub fn bit_len(&self) -> u32 {
        self.sync_bits + self.address_bits + OPCODE_BITS + CHECKSUM_BITS
    }

    /// Time to clock one frame out (s).
    pub fn frame_time(&self) -> f64 {
        f64::from(self.bit_len()) / self.clock_hz
    }

    fn payload_bits(&self) -> u32 {
        self.address_bits + OPCODE_BITS
    }

    fn checksum(&self, payload: u32) -> u32 {
        let n = self.payload_bits();
        let (mut even, mut odd) = (0, 0);
        for i in 0..n {
            let bit = (payload >> i) & 1;
            if i % 2 == 0 {
                even ^= bit;
            } else {
                odd ^= bit;
            }
        }
        (odd << 1) | even
    }

    pub fn encode_word(&self, f: &Frame) -> Result<u32, MuxError> {
        if f.address >= self.electrode_count {
            return Err(MuxError::Encode(format!(
                "address {} out of range (< {})",
                f.address, self.electrode_count
            )));
        }
        let payload = (f.address << OPCODE_BITS) | f.opcode as u32;
        let head = self.sync_pattern << self.payload_bits();
        Ok(((head | payload) << CHECKSUM_BITS) | self.checksum(payload))
    }

    pub fn decode_word(&self, w: u32) -> Result<Frame, MuxError> {
        if self.bit_len() < 32 && w >> self.bit_len() != 0 {
            return Err(MuxError::Protocol("bits set beyond the frame length".into()));
        }
        let check = w & 0b11;
        let payload = (w >> CHECKSUM_BITS) & ((1 << self.payload_bits()) - 1);
        let sync = w >> (CHECKSUM_BITS + self.payload_bits());
        if sync != self.sync_pattern {
            return Err(MuxError::Protocol(format!("bad sync {sync:#b}")));
        }
        if check != self.checksum(payload) {
            return Err(MuxError::Protocol("checksum mismatch".into()));
        }
        let address = payload >> OPCODE_BITS;
        if address >= self.electrode_count {
            return Err(MuxError::Protocol(format!("address {address} out of range")));
        }
        Ok(Frame {
            address,
            opcode: Opcode::from_bits(payload),
        })
    }

    /// Frame as a bit vector, most significant bit first.
    pub fn encode(&self, f: &Frame) -> Result<Vec<bool>, MuxError> {
        let w = self.encode_word(f)?;
        Ok((0..self.bit_len()).rev().map(|i| (w >> i) & 1 == 1).collect())
    }

    pub fn decode(&self, bits: &[bool]) -> Result<Frame, MuxError> {
        if bits.len() != self.bit_len() as usize {
            return Err(MuxError::Protocol(format!(
                "expected {} bits, got {}",
                self.bit_len(),
                bits.len()
            )));
        }
        let w = bits.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
        self.decode_word(w)
    }
}
