//! Functional and cost simulator for binary neural networks mapped onto
//! NVM crossbar subarrays.
//!
//! The functional side ([`engine`]) executes a network with crossbar
//! tiling, bit-serial first-layer inputs and finite-resolution ADCs. The
//! cost side ([`cost`]) turns a layer list and a unit-cost table into chip
//! area, per-image latency and energy, and throughput figures.
//!
//! ```
//! use xbarsim::cost::chip_report;
//! use xbarsim::zoo;
//! # let hw: xbarsim::cost::HardwareConfig =
//! #     serde_json::from_str(include_str!("../../../configs/calibrated.json")).unwrap();
//! let report = chip_report(&zoo::resnet18(), &hw, 3).unwrap();
//! assert!(report.area.chip_mm2 > report.area.cim_mm2);
//! ```

pub mod cost;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod ir;
pub mod quant;
pub mod xbar;
pub mod zoo;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/bundle-format.md")]
    pub struct BundleFormat;
    #[doc = include_str!("../../../book/src/quantization.md")]
    pub struct Quantization;
    #[doc = include_str!("../../../book/src/crossbar.md")]
    pub struct Crossbar;
    #[doc = include_str!("../../../book/src/inference.md")]
    pub struct Inference;
    #[doc = include_str!("../../../book/src/cost-model.md")]
    pub struct CostModel;
    #[doc = include_str!("../../../book/src/sweeps.md")]
    pub struct Sweeps;
}
