//! CRC-8: polynomial 0x07, init 0x00, MSB first, no reflection, no final xor.

const POLY: u8 = 0x07;

const TABLE: [u8; 256] = build_table();

const fn build_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0u8, |crc, &b| TABLE[(crc ^ b) as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Bit-serial reference, kept separate from the table path.
    fn crc8_bitwise(bytes: &[u8]) -> u8 {
        let mut crc = 0u8;
        for &b in bytes {
            crc ^= b;
            for _ in 0..8 {
                let carry = crc & 0x80 != 0;
                crc <<= 1;
                if carry {
                    crc ^= 0x07;
                }
            }
        }
        crc
    }

    #[test]
    fn known_values() {
        assert_eq!(crc8(&[]), 0x00);
        assert_eq!(crc8(&[0x00]), 0x00);
        assert_eq!(crc8_bitwise(&[0x02, 0x00]), 0x2A);
        assert_eq!(crc8(&[0x02, 0x00]), 0x2A);
        // CRC-8/SMBUS check value.
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    proptest! {
        #[test]
        fn table_matches_bitwise(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(crc8(&bytes), crc8_bitwise(&bytes));
        }
    }
}
