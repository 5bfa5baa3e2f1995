use crate::error::{Error, Result};

/// Bit-packed tensor of ±1 values.
///
/// Element `i` (row-major over `dims`) lives in bit `i % 8` of byte `i / 8`;
/// a set bit means +1, a clear bit −1. Trailing bits of the last byte are
/// kept at zero so that equality is structural.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBinaryTensor {
    dims: Vec<usize>,
    bits: Vec<u8>,
}

impl PackedBinaryTensor {
    /// Wraps an already packed buffer. Fails when the byte count does not
    /// match the element count; stray padding bits are cleared.
    pub fn from_bytes(dims: Vec<usize>, mut bits: Vec<u8>) -> Result<Self> {
        let n: usize = dims.iter().product();
        let expected = n.div_ceil(8);
        if bits.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: bits.len() });
        }
        if !n.is_multiple_of(8) {
            let last = bits.len() - 1;
            bits[last] &= (1u8 << (n % 8)) - 1;
        }
        Ok(Self { dims, bits })
    }

    /// Packs a slice of signs. Positive values become +1, everything else −1.
    pub fn from_signs(dims: Vec<usize>, signs: &[i8]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if signs.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: signs.len() });
        }
        let mut bits = vec![0u8; n.div_ceil(8)];
        for (i, &s) in signs.iter().enumerate() {
            if s > 0 {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        Ok(Self { dims, bits })
    }

    pub fn filled(dims: Vec<usize>, positive: bool) -> Self {
        let n: usize = dims.iter().product();
        let signs = vec![if positive { 1 } else { -1 }; n];
        Self::from_signs(dims, &signs).expect("length matches by construction")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Whether element `i` is +1.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 8] >> (i % 8) & 1 == 1
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        if self.bit(i) {
            1
        } else {
            -1
        }
    }

    /// Element `(r, c)` of a two-dimensional tensor.
    #[inline]
    pub fn get2(&self, r: usize, c: usize) -> i8 {
        self.get(r * self.dims[1] + c)
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_is_row_major_lsb_first() {
        // 2x5 matrix, only element (1, 2) positive -> flat index 7 -> byte 0 bit 7
        let mut s = vec![-1i8; 10];
        s[7] = 1;
        let t = PackedBinaryTensor::from_signs(vec![2, 5], &s).unwrap();
        assert_eq!(t.as_bytes(), &[0b1000_0000, 0]);
        assert_eq!(t.get2(1, 2), 1);
        assert_eq!(t.get2(0, 2), -1);
    }

    #[test]
    fn padding_bits_are_cleared() {
        let t = PackedBinaryTensor::from_bytes(vec![3], vec![0xff]).unwrap();
        assert_eq!(t.as_bytes(), &[0b111]);
        assert_eq!(t, PackedBinaryTensor::filled(vec![3], true));
    }

    #[test]
    fn wrong_byte_count_is_rejected() {
        let err = PackedBinaryTensor::from_bytes(vec![4, 2], vec![0; 7]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 1, actual: 7 }));
    }
}
