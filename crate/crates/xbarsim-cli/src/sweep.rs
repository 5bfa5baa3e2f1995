//! Accuracy grids over (B, A) and hardware sweeps over A.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xbarsim::cost::{chip_report_from_mapping, compute_mapping, ChipReport, HardwareConfig};
use xbarsim::dataset::Dataset;
use xbarsim::engine::{Accuracy, ExecutionConfig, Simulator};
use xbarsim::ir::{load_topology, NetworkDescriptor, Topology};
use xbarsim::xbar::ClipPolicy;
use xbarsim::zoo;

use crate::error::{Error, Result};

/// Inclusive bit-width range written `LO..HI` (or a single value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitRange {
    pub lo: u32,
    pub hi: u32,
}

impl BitRange {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::Args(format!("bad range {lo}..{hi}")));
        }
        Ok(BitRange { lo, hi })
    }

    pub fn single(v: u32) -> Result<Self> {
        BitRange::new(v, v)
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        self.lo..=self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl FromStr for BitRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Args(format!("expected LO..HI, got {s:?}"));
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
        match s.split_once("..") {
            Some((lo, hi)) => BitRange::new(num(lo)?, num(hi.trim_start_matches('='))?),
            None => BitRange::single(num(s)?),
        }
    }
}

impl fmt::Display for BitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

/// A bundle directory or a built-in descriptor (`zoo:NAME`, layers only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Bundle(PathBuf),
    Zoo(String),
}

impl FromStr for ModelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("zoo:") {
            Some(name) if zoo::by_name(name).is_some() => Ok(ModelSource::Zoo(name.to_string())),
            Some(name) => Err(Error::Args(format!("unknown zoo network {name:?}; known: {}", zoo::NAMES.join(", ")))),
            None => Ok(ModelSource::Bundle(PathBuf::from(s))),
        }
    }
}

impl ModelSource {
    pub fn topology(&self) -> Result<Topology> {
        match self {
            ModelSource::Bundle(dir) => Ok(load_topology(dir)?),
            ModelSource::Zoo(name) => Ok(zoo::by_name(name).expect("checked on parse")),
        }
    }
}

/// Parses `full` or `percentile:P`.
pub fn parse_clip(s: &str) -> Result<ClipPolicy> {
    match s.split_once(':') {
        None if s == "full" => Ok(ClipPolicy::FullRange),
        Some(("percentile", p)) => match p.parse::<f64>() {
            Ok(p) if p > 0.0 && p <= 100.0 => Ok(ClipPolicy::Percentile(p)),
            _ => Err(Error::Args(format!("bad percentile {p:?}"))),
        },
        _ => Err(Error::Args(format!("expected full or percentile:P, got {s:?}"))),
    }
}

/// Sorted sample indices: all of them, or `n` drawn without replacement.
pub fn subsample(len: usize, n: Option<usize>, seed: u64) -> Vec<usize> {
    match n {
        Some(n) if n < len => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, len, n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

/// Images used to fit percentile clip ranges.
pub const CALIBRATION_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub input_bits: u32,
    pub adc_bits: u32,
    pub correct: usize,
    pub total: usize,
}

impl AccuracyCell {
    pub fn accuracy(&self) -> f64 {
        Accuracy { correct: self.correct, total: self.total }.fraction()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub model: String,
    pub input_bits: BitRange,
    pub adc_bits: BitRange,
    pub clip: ClipPolicy,
    /// Cells in (B, A) order.
    pub cells: Vec<AccuracyCell>,
    /// Lossless-converter accuracy per B; `adc_bits` is 0.
    pub exact: Vec<AccuracyCell>,
}

impl AccuracyGrid {
    pub fn cell(&self, b: u32, a: u32) -> Option<&AccuracyCell> {
        self.cells.iter().find(|c| c.input_bits == b && c.adc_bits == a)
    }

    pub fn exact(&self, b: u32) -> Option<&AccuracyCell> {
        self.exact.iter().find(|c| c.input_bits == b)
    }

    /// Mean accuracy over B for one A.
    pub fn column_mean(&self, a: u32) -> f64 {
        let col: Vec<f64> = self.cells.iter().filter(|c| c.adc_bits == a).map(AccuracyCell::accuracy).collect();
        col.iter().sum::<f64>() / col.len().max(1) as f64
    }
}

/// Evaluates every (B, A) cell on `indices` of `data`. Cells run in
/// parallel and are merged in (B, A) order.
pub fn run_accuracy_sweep(
    net: &NetworkDescriptor,
    data: &Dataset,
    indices: &[usize],
    input_bits: BitRange,
    adc_bits: BitRange,
    clip: ClipPolicy,
) -> Result<AccuracyGrid> {
    if indices.is_empty() {
        return Err(Error::Args("no samples to evaluate".into()));
    }
    let calib: Vec<&[f32]> = indices.iter().take(CALIBRATION_BATCH).map(|&i| data.sample(i)).collect();
    let eval = |b: u32, a: Option<u32>| -> Result<AccuracyCell> {
        let cfg = match a {
            Some(a) => ExecutionConfig::new(b, a)?.with_clip(clip),
            None => ExecutionConfig::exact(b)?,
        };
        let acc = Simulator::calibrate(net, cfg, &calib)?.evaluate_accuracy(data, Some(indices))?;
        Ok(AccuracyCell { input_bits: b, adc_bits: a.unwrap_or(0), correct: acc.correct, total: acc.total })
    };
    let grid: Vec<(u32, u32)> = input_bits.values().flat_map(|b| adc_bits.values().map(move |a| (b, a))).collect();
    let cells = grid.par_iter().map(|&(b, a)| eval(b, Some(a))).collect::<Result<Vec<_>>>()?;
    let exact =
        input_bits.values().collect::<Vec<_>>().par_iter().map(|&b| eval(b, None)).collect::<Result<Vec<_>>>()?;
    Ok(AccuracyGrid { model: net.name().to_string(), input_bits, adc_bits, clip, cells, exact })
}

/// One chip report per A.
pub fn run_hardware_sweep(topo: &Topology, hw: &HardwareConfig, adc_bits: BitRange) -> Result<Vec<ChipReport>> {
    if let Some(a) = adc_bits.values().find(|a| hw.units(*a).is_err()) {
        return Err(Error::Args(format!("hardware config {:?} has no unit costs for A={a}", hw.name)));
    }
    let mapping = compute_mapping(topo, hw)?;
    adc_bits.values().map(|a| Ok(chip_report_from_mapping(&topo.name, &mapping, hw, a)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!("1..8".parse::<BitRange>().unwrap(), BitRange { lo: 1, hi: 8 });
        assert_eq!("3..=5".parse::<BitRange>().unwrap(), BitRange { lo: 3, hi: 5 });
        assert_eq!("4".parse::<BitRange>().unwrap(), BitRange { lo: 4, hi: 4 });
        assert!("8..3".parse::<BitRange>().is_err());
        assert!("0..3".parse::<BitRange>().is_err());
        assert!("a..b".parse::<BitRange>().is_err());
    }

    #[test]
    fn model_sources() {
        assert_eq!("zoo:alexnet".parse::<ModelSource>().unwrap(), ModelSource::Zoo("alexnet".into()));
        assert!("zoo:vgg".parse::<ModelSource>().is_err());
        assert_eq!("fixtures/x".parse::<ModelSource>().unwrap(), ModelSource::Bundle("fixtures/x".into()));
    }

    #[test]
    fn clip_policies() {
        assert_eq!(parse_clip("full").unwrap(), ClipPolicy::FullRange);
        assert_eq!(parse_clip("percentile:99.9").unwrap(), ClipPolicy::Percentile(99.9));
        assert!(parse_clip("percentile:0").is_err());
        assert!(parse_clip("median").is_err());
    }

    #[test]
    fn subsample_is_seeded_and_sorted() {
        let a = subsample(100, Some(10), 7);
        assert_eq!(a, subsample(100, Some(10), 7));
        assert_ne!(a, subsample(100, Some(10), 8));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(5, Some(10), 1), vec![0, 1, 2, 3, 4]);
    }
}
