//! First-layer input quantization, bit-serial decomposition and
//! binarization.

use crate::error::{Error, Result};
use crate::ir::{PackedBinaryTensor, ThresholdVector, MAX_INPUT_BITS};

/// Input precision `B` in bits, `1..=32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Precision(u32);

impl Precision {
    pub fn new(bits: u32) -> Result<Self> {
        if (1..=MAX_INPUT_BITS).contains(&bits) {
            Ok(Precision(bits))
        } else {
            Err(Error::Precision { bits, lo: 1, hi: MAX_INPUT_BITS })
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Smallest representable value, `-2^(B-1)`.
    pub fn min_value(self) -> i64 {
        -(1i64 << (self.0 - 1))
    }

    /// Largest representable value, `2^(B-1) - 1`.
    pub fn max_value(self) -> i64 {
        (1i64 << (self.0 - 1)) - 1
    }

    /// Shift-add weight of bit plane `b`; the MSB plane is negative.
    pub fn plane_weight(self, b: u32) -> i64 {
        if b + 1 == self.0 {
            -(1i64 << b)
        } else {
            1i64 << b
        }
    }

    /// Quantization step for a tensor whose largest magnitude is `max_abs`.
    pub fn scale_for(self, max_abs: f64) -> f64 {
        if max_abs == 0.0 {
            1.0
        } else if self.0 == 1 {
            max_abs
        } else {
            max_abs / self.max_value() as f64
        }
    }
}

/// Signed integers in the `B`-bit two's-complement range with a real scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub dims: Vec<usize>,
    pub values: Vec<i32>,
    pub scale: f64,
    pub precision: Precision,
}

impl QuantizedTensor {
    pub fn dequantize(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64 * self.scale).collect()
    }
}

/// Largest absolute value of `x` (0 for an empty slice).
pub fn max_abs(x: &[f32]) -> f64 {
    x.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()))
}

/// Quantizes `x` with its own dynamic range.
///
/// `scale = max|x| / (2^(B-1) - 1)` (or `max|x|` when `B = 1`, or 1 for an
/// all-zero tensor); values are rounded half away from zero and clamped.
///
/// ```
/// use xbarsim::quant::{quantize_dynamic, Precision};
/// let q = quantize_dynamic(&[-1.0, 0.5, 1.0], vec![3], Precision::new(8).unwrap()).unwrap();
/// assert_eq!(q.values, vec![-127, 64, 127]);
/// ```
pub fn quantize_dynamic(x: &[f32], dims: Vec<usize>, precision: Precision) -> Result<QuantizedTensor> {
    if x.is_empty() {
        return Err(Error::Empty("tensor to quantize"));
    }
    let scale = precision.scale_for(max_abs(x));
    quantize_with_scale(x, dims, precision, scale)
}

/// Quantizes with an externally chosen scale (e.g. one shared by a batch).
pub fn quantize_with_scale(x: &[f32], dims: Vec<usize>, precision: Precision, scale: f64) -> Result<QuantizedTensor> {
    let n: usize = dims.iter().product();
    if n != x.len() {
        return Err(Error::LengthMismatch { expected: n, actual: x.len() });
    }
    let (lo, hi) =
        if precision.bits() == 1 { (-1.0, 0.0) } else { (precision.min_value() as f64, precision.max_value() as f64) };
    let values = x.iter().map(|&v| ((v as f64) / scale).round().clamp(lo, hi) as i32).collect();
    Ok(QuantizedTensor { dims, values, scale, precision })
}

/// Bit planes of a quantized tensor, least significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlaneSet {
    pub precision: Precision,
    pub planes: Vec<Vec<u8>>,
}

impl BitPlaneSet {
    /// Rebuilds the integer values as `sum_b weight(b) * plane_b`.
    pub fn reconstruct(&self) -> Vec<i64> {
        let n = self.planes.first().map_or(0, Vec::len);
        let mut out = vec![0i64; n];
        for (b, plane) in self.planes.iter().enumerate() {
            let w = self.precision.plane_weight(b as u32);
            for (o, &bit) in out.iter_mut().zip(plane) {
                *o += w * bit as i64;
            }
        }
        out
    }
}

/// Bit `b` of `v` in two's complement.
#[inline]
pub fn plane_bit(v: i32, b: u32) -> u8 {
    ((v >> b) & 1) as u8
}

/// Two's-complement decomposition into `B` planes.
///
/// ```
/// use xbarsim::quant::{bit_serialize, Precision, QuantizedTensor};
/// let q = QuantizedTensor { dims: vec![1], values: vec![-1], scale: 1.0, precision: Precision::new(2).unwrap() };
/// let planes = bit_serialize(&q);
/// assert_eq!(planes.planes, vec![vec![1], vec![1]]);
/// assert_eq!(planes.reconstruct(), vec![-1]);
/// ```
pub fn bit_serialize(q: &QuantizedTensor) -> BitPlaneSet {
    let planes = (0..q.precision.bits()).map(|b| q.values.iter().map(|&v| plane_bit(v, b)).collect()).collect();
    BitPlaneSet { precision: q.precision, planes }
}

/// Sign against per-channel thresholds: `+1` where `x >= tau`, else `-1`.
///
/// `x` is laid out position-major with `tau.len()` channels per position.
pub fn binarize(x: &[f64], tau: &ThresholdVector) -> Result<PackedBinaryTensor> {
    let c = tau.len();
    if c == 0 || !x.len().is_multiple_of(c) {
        return Err(Error::LengthMismatch { expected: c, actual: x.len() });
    }
    let t = tau.as_slice();
    let signs: Vec<i8> = x.iter().enumerate().map(|(i, &v)| if v >= t[i % c] { 1 } else { -1 }).collect();
    PackedBinaryTensor::from_signs(vec![x.len() / c, c], &signs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(bits: u32) -> Precision {
        Precision::new(bits).unwrap()
    }

    #[test]
    fn zero_tensor_has_unit_scale() {
        for b in [1, 2, 8, 32] {
            let q = quantize_dynamic(&[0.0, 0.0, 0.0], vec![3], p(b)).unwrap();
            assert_eq!(q.values, vec![0, 0, 0]);
            assert_eq!(q.scale, 1.0);
        }
    }

    #[test]
    fn eight_bit_example() {
        let q = quantize_dynamic(&[-1.0, 0.5, 1.0], vec![3], p(8)).unwrap();
        assert_eq!(q.scale, 1.0 / 127.0);
        assert_eq!(q.values, vec![-127, 64, 127]);
    }

    #[test]
    fn one_bit_maps_to_minus_one_or_zero() {
        let q = quantize_dynamic(&[0.3, -0.2], vec![2], p(1)).unwrap();
        assert_eq!(q.values, vec![0, -1]);
        assert!((q.scale - 0.3f32 as f64).abs() < 1e-12);
    }

    #[test]
    fn precision_range_is_checked() {
        assert!(Precision::new(0).is_err());
        assert!(Precision::new(33).is_err());
        assert!(quantize_dynamic(&[], vec![0], p(4)).is_err());
    }

    #[test]
    fn thirteen_in_five_bits() {
        let q = QuantizedTensor { dims: vec![1], values: vec![13], scale: 1.0, precision: p(5) };
        let planes: Vec<u8> = bit_serialize(&q).planes.iter().map(|pl| pl[0]).collect();
        assert_eq!(planes, vec![1, 0, 1, 1, 0]);
    }

    #[test]
    fn ties_binarize_positive() {
        let tau = ThresholdVector::new(vec![0.5, -2.0]);
        let b = binarize(&[0.5, -2.0, 3.0, -2.5], &tau).unwrap();
        assert_eq!(b.to_signs(), vec![1, 1, 1, -1]);
        let z = ThresholdVector::zeros(2);
        assert_eq!(binarize(&[3.0, -2.0], &z).unwrap().to_signs(), vec![1, -1]);
        assert!(binarize(&[1.0, 2.0, 3.0], &z).is_err());
    }
}
