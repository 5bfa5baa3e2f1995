//! Crossbar subarrays: two-cell weight mapping, ideal column sums, and the
//! ADC partial-sum quantizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::PackedBinaryTensor;

/// Physical subarray size `R x C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
}

impl Geometry {
    pub fn new(rows: usize, cols: usize) -> Self {
        Geometry { rows, cols }
    }

    /// Tiles needed for a `k x n` weight matrix: `(row tiles, col tiles)`.
    pub fn tiles_for(&self, k: usize, n: usize) -> (usize, usize) {
        (k.div_ceil(self.rows), n.div_ceil(self.cols))
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { rows: 128, cols: 128 }
    }
}

/// One programmed subarray.
///
/// Cells are stored column by column as row bitmasks, so a column sum is a
/// handful of popcounts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubarrayTile {
    pub rows_used: usize,
    pub cols_used: usize,
    /// `(row_offset, col_offset)` in the logical weight matrix.
    pub origin: (usize, usize),
    words: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl SubarrayTile {
    fn new(rows_used: usize, cols_used: usize, origin: (usize, usize)) -> Self {
        let words = rows_used.div_ceil(64);
        SubarrayTile {
            rows_used,
            cols_used,
            origin,
            words,
            pos: vec![0; words * cols_used],
            neg: vec![0; words * cols_used],
        }
    }

    /// `(g+, g-)` conductance states of cell `(r, c)`.
    pub fn cell(&self, r: usize, c: usize) -> (bool, bool) {
        let i = c * self.words + r / 64;
        let m = 1u64 << (r % 64);
        (self.pos[i] & m != 0, self.neg[i] & m != 0)
    }

    /// The signed weight `g+ - g-` stored at `(r, c)`.
    pub fn weight(&self, r: usize, c: usize) -> i8 {
        let (p, n) = self.cell(r, c);
        p as i8 - n as i8
    }

    /// Ideal column sums for `drive`, written into `out[..cols_used]`.
    #[inline]
    pub fn column_sums_into(&self, drive: &Drive, out: &mut [i64]) {
        debug_assert_eq!(drive.len, self.rows_used);
        let w = self.words;
        for (c, o) in out.iter_mut().enumerate().take(self.cols_used) {
            let gp = &self.pos[c * w..(c + 1) * w];
            let gn = &self.neg[c * w..(c + 1) * w];
            let mut s = 0i64;
            for k in 0..w {
                let (dp, dn) = (drive.pos[k], drive.neg[k]);
                s += (dp & gp[k]).count_ones() as i64 + (dn & gn[k]).count_ones() as i64
                    - (dp & gn[k]).count_ones() as i64
                    - (dn & gp[k]).count_ones() as i64;
            }
            *o = s;
        }
    }
}

/// Wordline drive pattern for one tile.
///
/// Xnor mode drives each row with `-1`, `0` (row left floating, used for
/// padding) or `+1` on the complementary line pair. Bitplane mode drives a
/// single line with `0` or `1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Drive {
    pub mode: DriveMode,
    len: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveMode {
    Xnor,
    Bitplane,
}

impl Drive {
    pub fn xnor(values: &[i8]) -> Result<Self> {
        let mut d = Drive::empty(DriveMode::Xnor, values.len());
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => d.pos[i / 64] |= 1 << (i % 64),
                -1 => d.neg[i / 64] |= 1 << (i % 64),
                0 => {}
                _ => return Err(Error::DriveMode(format!("xnor drive value {v} at row {i}"))),
            }
        }
        Ok(d)
    }

    pub fn bitplane(values: &[u8]) -> Result<Self> {
        let mut d = Drive::empty(DriveMode::Bitplane, values.len());
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => d.pos[i / 64] |= 1 << (i % 64),
                0 => {}
                _ => return Err(Error::DriveMode(format!("bitplane drive value {v} at row {i}"))),
            }
        }
        Ok(d)
    }

    pub(crate) fn empty(mode: DriveMode, len: usize) -> Self {
        let words = len.div_ceil(64);
        Drive { mode, len, pos: vec![0; words], neg: vec![0; words] }
    }

    /// Clears the drive and resizes it to `len` rows.
    pub(crate) fn reset(&mut self, mode: DriveMode, len: usize) {
        let words = len.div_ceil(64);
        self.mode = mode;
        self.len = len;
        self.pos.clear();
        self.pos.resize(words, 0);
        self.neg.clear();
        self.neg.resize(words, 0);
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, v: i64) {
        if v > 0 {
            self.pos[row / 64] |= 1 << (row % 64);
        } else if v < 0 {
            self.neg[row / 64] |= 1 << (row % 64);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Splits a `K x N` weight matrix into subarray tiles, row-tile major.
///
/// A weight of +1 programs `(g+, g-) = (1, 0)`, −1 programs `(0, 1)`.
pub fn map_weights(w: &PackedBinaryTensor, geom: Geometry) -> Result<Vec<SubarrayTile>> {
    let &[k, n] = w.dims() else {
        return Err(Error::LengthMismatch { expected: 2, actual: w.dims().len() });
    };
    if k == 0 || n == 0 || geom.rows == 0 || geom.cols == 0 {
        return Err(Error::Empty("weight matrix or subarray"));
    }
    let (rt, ct) = geom.tiles_for(k, n);
    let mut tiles = Vec::with_capacity(rt * ct);
    for tr in 0..rt {
        for tc in 0..ct {
            let r0 = tr * geom.rows;
            let c0 = tc * geom.cols;
            let rows = geom.rows.min(k - r0);
            let cols = geom.cols.min(n - c0);
            let mut t = SubarrayTile::new(rows, cols, (r0, c0));
            for c in 0..cols {
                for r in 0..rows {
                    let i = c * t.words + r / 64;
                    let m = 1u64 << (r % 64);
                    if w.bit((r0 + r) * n + c0 + c) {
                        t.pos[i] |= m;
                    } else {
                        t.neg[i] |= m;
                    }
                }
            }
            tiles.push(t);
        }
    }
    Ok(tiles)
}

/// Ideal integer column sums of `tile` under `drive`.
///
/// ```
/// use xbarsim::ir::PackedBinaryTensor;
/// use xbarsim::xbar::{column_sums, map_weights, Drive, Geometry};
/// let w = PackedBinaryTensor::from_signs(vec![3, 2], &[1, -1, 1, 1, -1, 1]).unwrap();
/// let tiles = map_weights(&w, Geometry::new(128, 128)).unwrap();
/// let sums = column_sums(&tiles[0], &Drive::xnor(&[1, 1, -1]).unwrap()).unwrap();
/// assert_eq!(sums, vec![3, -1]);
/// ```
pub fn column_sums(tile: &SubarrayTile, drive: &Drive) -> Result<Vec<i64>> {
    if drive.len != tile.rows_used {
        return Err(Error::DriveMode(format!(
            "{:?} drive of {} rows on a tile with {} rows",
            drive.mode, drive.len, tile.rows_used
        )));
    }
    let mut out = vec![0; tile.cols_used];
    tile.column_sums_into(drive, &mut out);
    Ok(out)
}

/// Converter resolution and calibrated clip range.
///
/// The level grid has step `Δ = max(1, ceil((hi - lo + 1) / 2^A))` and
/// `min(2^A, floor((hi - lo) / Δ) + 1)` usable levels, centered in the clip
/// range so every level lies inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdcSpec {
    pub bits: u32,
    pub clip_lo: i64,
    pub clip_hi: i64,
}

/// Largest ADC resolution accepted.
pub const MAX_ADC_BITS: u32 = 30;

impl AdcSpec {
    pub fn new(bits: u32, clip_lo: i64, clip_hi: i64) -> Result<Self> {
        if !(1..=MAX_ADC_BITS).contains(&bits) {
            return Err(Error::Precision { bits, lo: 1, hi: MAX_ADC_BITS });
        }
        if clip_lo > clip_hi {
            return Err(Error::AdcRange { lo: clip_lo, hi: clip_hi });
        }
        Ok(AdcSpec { bits, clip_lo, clip_hi })
    }

    /// Smallest converter that reproduces every integer in `[lo, hi]`.
    pub fn lossless(clip_lo: i64, clip_hi: i64) -> Result<Self> {
        let span = (clip_hi - clip_lo + 1).max(1) as u64;
        let bits = (64 - (span - 1).leading_zeros()).max(1);
        AdcSpec::new(bits, clip_lo, clip_hi)
    }

    pub fn range_size(&self) -> i64 {
        self.clip_hi - self.clip_lo + 1
    }

    pub fn step(&self) -> i64 {
        let codes = 1i64 << self.bits;
        (self.range_size() + codes - 1).div_euclid(codes).max(1)
    }

    pub fn levels(&self) -> i64 {
        let d = self.step();
        (1i64 << self.bits).min((self.clip_hi - self.clip_lo) / d + 1)
    }

    /// Lowest reconstruction level.
    pub fn base(&self) -> i64 {
        let d = self.step();
        self.clip_lo + (self.clip_hi - self.clip_lo - (self.levels() - 1) * d) / 2
    }

    /// Whether every in-range integer passes through unchanged.
    pub fn is_lossless(&self) -> bool {
        self.step() == 1
    }

    /// Output code for `s` (`0..levels`).
    pub fn code(&self, s: i64) -> i64 {
        let d = self.step();
        let x = s.clamp(self.clip_lo, self.clip_hi) - self.base();
        (2 * x + d).div_euclid(2 * d).clamp(0, self.levels() - 1)
    }
}

/// Quantizes one partial sum and returns the reconstructed integer.
///
/// ```
/// use xbarsim::xbar::{adc_quantize, AdcSpec};
/// let spec = AdcSpec::new(3, -8, 8).unwrap();
/// assert_eq!(spec.step(), 3);
/// assert_eq!(adc_quantize(5, &spec), 4);
/// assert_eq!(adc_quantize(37, &AdcSpec::new(8, -100, 100).unwrap()), 37);
/// ```
#[inline]
pub fn adc_quantize(s: i64, spec: &AdcSpec) -> i64 {
    if spec.is_lossless() {
        return s.clamp(spec.clip_lo, spec.clip_hi);
    }
    spec.base() + spec.code(s) * spec.step()
}

/// How the clip range of a converter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum ClipPolicy {
    /// `[-rows_used, rows_used]` of each tile.
    #[default]
    FullRange,
    /// Symmetrized central `p` percent of observed partial sums.
    Percentile(f64),
}

/// Counts of observed partial sums.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: i64) {
        *self.counts.entry(v).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Nearest-rank quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> Option<i64> {
        if self.total == 0 {
            return None;
        }
        let rank = ((q * self.total as f64).ceil() as u64).clamp(1, self.total);
        let mut seen = 0;
        for (&v, &c) in &self.counts {
            seen += c;
            if seen >= rank {
                return Some(v);
            }
        }
        self.counts.keys().next_back().copied()
    }

    /// Symmetric clip `[-m, m]` covering the central `p` percent.
    pub fn symmetric_clip(&self, p: f64) -> Option<(i64, i64)> {
        let tail = (1.0 - p / 100.0).max(0.0) / 2.0;
        let lo = self.quantile(tail)?;
        let hi = self.quantile(1.0 - tail)?;
        let m = lo.abs().max(hi.abs());
        Some((-m, m))
    }
}

impl FromIterator<i64> for Histogram {
    fn from_iter<I: IntoIterator<Item = i64>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for v in iter {
            h.add(v);
        }
        h
    }
}

/// Picks the clip range for an `A`-bit converter.
pub fn calibrate_adc(samples: &[i64], bits: u32, policy: ClipPolicy, rows_used: usize) -> Result<AdcSpec> {
    match policy {
        ClipPolicy::FullRange => AdcSpec::new(bits, -(rows_used as i64), rows_used as i64),
        ClipPolicy::Percentile(p) => {
            let hist: Histogram = samples.iter().copied().collect();
            let (lo, hi) = hist.symmetric_clip(p).ok_or(Error::Empty("calibration samples"))?;
            AdcSpec::new(bits, lo, hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_all_positive() {
        let w = PackedBinaryTensor::filled(vec![2, 2], true);
        let t = map_weights(&w, Geometry::new(128, 128)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].rows_used, t[0].cols_used), (2, 2));
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(t[0].cell(r, c), (true, false));
            }
        }
    }

    #[test]
    fn three_by_two_on_two_by_two() {
        let w = PackedBinaryTensor::filled(vec![3, 2], false);
        let t = map_weights(&w, Geometry::new(2, 2)).unwrap();
        let rows: Vec<usize> = t.iter().map(|t| t.rows_used).collect();
        assert_eq!(rows, vec![2, 1]);
        assert_eq!(t[1].origin, (2, 0));
        assert_eq!(t[1].weight(0, 1), -1);
    }

    #[test]
    fn matched_xnor_drive_gives_row_count() {
        let signs = [1, -1, -1, 1, 1];
        let w = PackedBinaryTensor::from_signs(vec![5, 1], &signs).unwrap();
        let t = &map_weights(&w, Geometry::default()).unwrap()[0];
        assert_eq!(column_sums(t, &Drive::xnor(&signs).unwrap()).unwrap(), vec![5]);
        assert_eq!(column_sums(t, &Drive::bitplane(&[0; 5]).unwrap()).unwrap(), vec![0]);
        assert!(column_sums(t, &Drive::bitplane(&[0; 4]).unwrap()).is_err());
        assert!(Drive::xnor(&[2]).is_err());
        assert!(Drive::bitplane(&[2]).is_err());
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_adc(&[], 4, ClipPolicy::FullRange, 64).unwrap(), AdcSpec::new(4, -64, 64).unwrap());
        let s = calibrate_adc(&[3; 100], 4, ClipPolicy::Percentile(99.9), 64).unwrap();
        assert_eq!((s.clip_lo, s.clip_hi), (-3, 3));
        assert!(calibrate_adc(&[], 4, ClipPolicy::Percentile(99.9), 64).is_err());
        let uniform: Vec<i64> = (-8..=8).collect();
        let s = calibrate_adc(&uniform, 3, ClipPolicy::Percentile(100.0), 0).unwrap();
        assert_eq!((s.clip_lo, s.clip_hi, s.step()), (-8, 8, 3));
    }

    #[test]
    fn percentile_trims_tails() {
        let mut v: Vec<i64> = vec![0; 998];
        v.extend([100, -50]);
        let h: Histogram = v.into_iter().collect();
        assert_eq!(h.symmetric_clip(99.0), Some((0, 0)));
        assert_eq!(h.symmetric_clip(100.0), Some((-100, 100)));
    }

    #[test]
    fn adc_examples() {
        let s = AdcSpec::new(3, -8, 8).unwrap();
        assert_eq!(adc_quantize(5, &s), 4);
        // overflow lands on the top level, which stays inside the clip
        let top = adc_quantize(18, &s);
        assert_eq!(top, 7);
        assert!(top <= 8);
        assert_eq!(adc_quantize(37, &AdcSpec::new(8, -100, 100).unwrap()), 37);
        assert_eq!(adc_quantize(-300, &AdcSpec::new(8, -100, 100).unwrap()), -100);
    }

    #[test]
    fn lossless_spec_width() {
        assert_eq!(AdcSpec::lossless(-64, 64).unwrap().bits, 8);
        assert_eq!(AdcSpec::lossless(-1, 0).unwrap().bits, 1);
        assert_eq!(AdcSpec::lossless(0, 0).unwrap().bits, 1);
        assert!(AdcSpec::lossless(-9, 9).unwrap().is_lossless());
    }
}
