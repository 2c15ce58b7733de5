//! CRC generators from the 5G NR family (TS 38.212 conventions: all-zero
//! initialization, no final XOR).

/// A CRC polynomial of the given width; `poly` holds the coefficients of
/// `x^(width-1) .. x^0` (the leading term is implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrcSpec {
    pub name: &'static str,
    pub poly: u64,
    pub width: usize,
}

impl CrcSpec {
    /// CRC-11: `x^11 + x^10 + x^9 + x^5 + 1`.
    pub const CRC11: CrcSpec = CrcSpec {
        name: "crc11",
        poly: 0x621,
        width: 11,
    };

    /// CRC-24C: `x^24 + x^23 + x^21 + x^20 + x^17 + x^15 + x^13 + x^12 +
    /// x^8 + x^4 + x^2 + x + 1`.
    pub const CRC24C: CrcSpec = CrcSpec {
        name: "crc24c",
        poly: 0xB2B117,
        width: 24,
    };

    pub fn by_name(name: &str) -> Option<CrcSpec> {
        match name {
            "crc11" => Some(Self::CRC11),
            "crc24c" => Some(Self::CRC24C),
            _ => None,
        }
    }

    /// CRC bits over `bits` (each 0 or 1), most significant register bit
    /// first.
    pub fn compute(&self, bits: &[u8]) -> Vec<u8> {
        let mut reg = 0u64;
        let top = 1u64 << (self.width - 1);
        let mask = (1u64 << self.width) - 1;
        for &b in bits {
            debug_assert!(b <= 1);
            let fb = ((reg & top) != 0) as u64 ^ b as u64;
            reg = (reg << 1) & mask;
            if fb != 0 {
                reg ^= self.poly;
            }
        }
        (0..self.width)
            .map(|i| ((reg >> (self.width - 1 - i)) & 1) as u8)
            .collect()
    }

    pub fn check(&self, info: &[u8], crc: &[u8]) -> bool {
        crc.len() == self.width && self.compute(info) == crc
    }
}
