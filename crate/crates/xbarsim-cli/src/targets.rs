//! Reference chip figures the shipped hardware table is fitted to.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaTarget {
    pub chip: f64,
    pub cim: f64,
    pub ic: f64,
    pub adc: f64,
    pub accum: f64,
    pub other: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyTarget {
    pub total_ms: f64,
    pub buffer_ms: f64,
    pub ic_ms: f64,
    pub adc_us: f64,
    pub accum_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTarget {
    pub dynamic: f64,
    pub leakage: f64,
    pub buffer: f64,
    pub ic: f64,
    pub adc: f64,
    pub accum: f64,
}

impl EnergyTarget {
    /// Dynamic energy not covered by the listed components.
    pub fn residual(&self) -> f64 {
        self.dynamic - self.buffer - self.ic - self.adc - self.accum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTarget {
    pub tops_per_w: f64,
    pub tops: f64,
    pub fps: f64,
    pub tops_per_cm2: f64,
}

/// Per-model rows, one per entry of [`Targets::adc_bits`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTargets {
    pub area_mm2: Vec<AreaTarget>,
    pub latency: Vec<LatencyTarget>,
    pub energy_uj: Vec<EnergyTarget>,
    pub metrics: Vec<MetricsTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub adc_bits: Vec<u32>,
    pub clock_ns: Vec<f64>,
    /// Keyed by zoo network name.
    pub models: BTreeMap<String, ModelTargets>,
}

impl Targets {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: Targets = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        let n = t.adc_bits.len();
        let ragged = t.clock_ns.len() != n
            || t.models.values().any(|m| {
                m.area_mm2.len() != n || m.latency.len() != n || m.energy_uj.len() != n || m.metrics.len() != n
            });
        if ragged {
            return Err(Error::format(path, "every table needs one row per ADC resolution"));
        }
        Ok(t)
    }

    pub fn row(&self, adc_bits: u32) -> Option<usize> {
        self.adc_bits.iter().position(|&a| a == adc_bits)
    }
}
