//! Table-driven chip cost model: mapping counts, area, per-image latency
//! and energy, and throughput metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Combine, Topology};
use crate::xbar::Geometry;

/// Weight duplication used to keep large convolutions from stalling the
/// pipeline: a layer evaluating `P` positions per image gets
/// `min(max_replicas, ceil(P / positions_per_replica))` copies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub max_replicas: usize,
    pub positions_per_replica: usize,
}

impl Replication {
    pub fn replicas(&self, positions: usize) -> usize {
        positions.div_ceil(self.positions_per_replica.max(1)).clamp(1, self.max_replicas.max(1))
    }
}

impl Default for Replication {
    fn default() -> Self {
        Replication { max_replicas: 1, positions_per_replica: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcUnit {
    pub area_um2: f64,
    pub latency_ns: f64,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferUnit {
    /// Clock cycles per buffer access.
    pub cycles_per_access: f64,
    /// Clock cycles per mapped subarray per image (weight-stationary streaming).
    pub cycles_per_subarray: f64,
    pub energy_pj: f64,
    pub energy_per_subarray_pj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcUnit {
    pub area_chip_um2: f64,
    pub area_per_subarray_um2: f64,
    pub latency_ns: f64,
    pub latency_per_subarray_ns: f64,
    pub energy_pj: f64,
    pub energy_per_subarray_pj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccumUnit {
    pub area_per_subarray_um2: f64,
    pub latency_ns: f64,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeripheryUnit {
    pub area_chip_um2: f64,
    pub area_per_subarray_um2: f64,
    pub area_per_layer_um2: f64,
}

/// Unit costs at one ADC resolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCosts {
    pub clock_ns: f64,
    pub adc: AdcUnit,
    pub buffer: BufferUnit,
    pub ic: IcUnit,
    pub accum: AccumUnit,
    pub periphery: PeripheryUnit,
    /// Array read energy per binary MAC (reported as "other").
    pub array_energy_pj: f64,
}

impl UnitCosts {
    /// Field-wise maximum of two rows.
    pub fn max(&self, other: &UnitCosts) -> UnitCosts {
        let (a, b) = (self.values(), other.values());
        UnitCosts::from_values(std::array::from_fn(|i| a[i].max(b[i])))
    }

    fn from_values(v: [f64; 21]) -> UnitCosts {
        UnitCosts {
            clock_ns: v[0],
            adc: AdcUnit { area_um2: v[1], latency_ns: v[2], energy_pj: v[3] },
            buffer: BufferUnit {
                cycles_per_access: v[4],
                cycles_per_subarray: v[5],
                energy_pj: v[6],
                energy_per_subarray_pj: v[7],
            },
            ic: IcUnit {
                area_chip_um2: v[8],
                area_per_subarray_um2: v[9],
                latency_ns: v[10],
                latency_per_subarray_ns: v[11],
                energy_pj: v[12],
                energy_per_subarray_pj: v[13],
            },
            accum: AccumUnit { area_per_subarray_um2: v[14], latency_ns: v[15], energy_pj: v[16] },
            periphery: PeripheryUnit { area_chip_um2: v[17], area_per_subarray_um2: v[18], area_per_layer_um2: v[19] },
            array_energy_pj: v[20],
        }
    }

    fn values(&self) -> [f64; 21] {
        let (a, b, i, c, p) = (self.adc, self.buffer, self.ic, self.accum, self.periphery);
        [
            self.clock_ns,
            a.area_um2,
            a.latency_ns,
            a.energy_pj,
            b.cycles_per_access,
            b.cycles_per_subarray,
            b.energy_pj,
            b.energy_per_subarray_pj,
            i.area_chip_um2,
            i.area_per_subarray_um2,
            i.latency_ns,
            i.latency_per_subarray_ns,
            i.energy_pj,
            i.energy_per_subarray_pj,
            c.area_per_subarray_um2,
            c.latency_ns,
            c.energy_pj,
            p.area_chip_um2,
            p.area_per_subarray_um2,
            p.area_per_layer_um2,
            self.array_energy_pj,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub name: String,
    pub subarray: Geometry,
    /// Columns sharing one ADC.
    pub mux_ratio: usize,
    pub pipeline: bool,
    #[serde(default)]
    pub replication: Replication,
    pub cim_cell_area_um2: f64,
    pub leakage_w_per_mm2: f64,
    /// Unit costs keyed by ADC resolution.
    pub resolutions: BTreeMap<u32, UnitCosts>,
}

impl HardwareConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hw: HardwareConfig = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.subarray;
        if g.rows == 0 || g.cols == 0 {
            return Err(Error::Config("subarray must be non-empty".into()));
        }
        if self.mux_ratio == 0 || !g.cols.is_multiple_of(self.mux_ratio) {
            return Err(Error::Config(format!("mux ratio {} does not divide {} columns", self.mux_ratio, g.cols)));
        }
        if self.replication.max_replicas == 0 || self.replication.positions_per_replica == 0 {
            return Err(Error::Config("replication parameters must be positive".into()));
        }
        if !(self.cim_cell_area_um2 >= 0.0 && self.leakage_w_per_mm2 >= 0.0) {
            return Err(Error::Config("negative cell area or leakage".into()));
        }
        for (a, u) in &self.resolutions {
            if u.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("negative or non-finite unit cost at A={a}")));
            }
            if u.clock_ns <= 0.0 {
                return Err(Error::Config(format!("clock period at A={a} must be positive")));
            }
        }
        Ok(())
    }

    pub fn units(&self, adc_bits: u32) -> Result<&UnitCosts> {
        self.resolutions.get(&adc_bits).ok_or_else(|| Error::Config(format!("no unit costs for A={adc_bits}")))
    }

    /// Whether every unit cost is non-decreasing in A.
    pub fn is_monotone(&self) -> bool {
        let rows: Vec<[f64; 21]> = self.resolutions.values().map(UnitCosts::values).collect();
        rows.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a <= b))
    }

    /// ADC columns per subarray, `C / M`.
    pub fn adcs_per_subarray(&self) -> usize {
        self.subarray.cols / self.mux_ratio
    }
}

/// Per-layer hardware counts for one image.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerMapping {
    pub layer: usize,
    pub fan_in: usize,
    pub out_channels: usize,
    /// Output positions before pooling.
    pub positions: usize,
    pub bit_planes: u32,
    pub row_tiles: usize,
    pub col_tiles: usize,
    pub n_tiles: usize,
    pub replicas: usize,
    /// Physical subarrays, `n_tiles * replicas`.
    pub subarrays: usize,
    /// Array read cycles per replica.
    pub n_reads: u64,
    pub n_adc_convs_per_image: u64,
    pub n_buffer_accesses: u64,
    pub n_ic_transfers: u64,
    pub n_accum_ops: u64,
    pub n_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MappingTotals {
    pub n_tiles: usize,
    pub subarrays: usize,
    pub n_adc_convs_per_image: u64,
    pub n_buffer_accesses: u64,
    pub n_ic_transfers: u64,
    pub n_accum_ops: u64,
    pub n_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MappingSummary {
    pub layers: Vec<LayerMapping>,
    pub totals: MappingTotals,
}

/// Counts tiles, conversions and transfers for every layer.
///
/// The first layer streams `B` input planes; later layers one.
///
/// ```
/// use xbarsim::cost::{compute_mapping, HardwareConfig};
/// use xbarsim::ir::{LayerDescriptor, Topology};
/// # let hw: HardwareConfig = serde_json::from_str(include_str!("../../../configs/calibrated.json")).unwrap();
/// let topo = Topology { name: "fc".into(), class_count: 1000, layers: vec![LayerDescriptor::fc(512, 1000).logits()] };
/// let m = compute_mapping(&topo, &hw).unwrap();
/// assert_eq!(m.layers[0].n_tiles, 32);
/// assert_eq!(m.layers[0].n_adc_convs_per_image, 512);
/// ```
pub fn compute_mapping(topo: &Topology, hw: &HardwareConfig) -> Result<MappingSummary> {
    hw.validate()?;
    if let Some(d) = topo.validate().into_iter().next() {
        return Err(Error::layer(d.layer, d.rule.to_string()));
    }
    let g = hw.subarray;
    let per_tile = hw.adcs_per_subarray() as u64;
    let mut layers = Vec::with_capacity(topo.layers.len());
    let mut totals = MappingTotals::default();
    for (i, l) in topo.layers.iter().enumerate() {
        let fan_in = l.fan_in();
        let out = l.out_channels;
        let positions = l.positions();
        let nb = if i == 0 { l.input_precision_bits } else { 1 };
        let (rt, ct) = g.tiles_for(fan_in, out);
        let n_tiles = rt * ct;
        let replicas = hw.replication.replicas(positions);
        let p = positions as u64;
        let nbu = nb as u64;
        let skip_adds = match (l.combine, topo.combined_shape(i)) {
            (Combine::Add, Ok(Some(shape))) => {
                let srcs = topo.sources(i).len() as u64;
                shape.len() as u64 * srcs.saturating_sub(1)
            }
            _ => 0,
        };
        let m = LayerMapping {
            layer: i,
            fan_in,
            out_channels: out,
            positions,
            bit_planes: nb,
            row_tiles: rt,
            col_tiles: ct,
            n_tiles,
            replicas,
            subarrays: n_tiles * replicas,
            n_reads: p.div_ceil(replicas as u64) * nbu,
            n_adc_convs_per_image: p * n_tiles as u64 * per_tile * nbu,
            n_buffer_accesses: p * nbu * rt as u64 + p * ct as u64,
            n_ic_transfers: p * nbu * n_tiles as u64,
            n_accum_ops: p * out as u64 * (rt as u64 * nbu - 1) + skip_adds,
            n_macs: p * fan_in as u64 * out as u64,
        };
        totals.n_tiles += m.n_tiles;
        totals.subarrays += m.subarrays;
        totals.n_adc_convs_per_image += m.n_adc_convs_per_image;
        totals.n_buffer_accesses += m.n_buffer_accesses;
        totals.n_ic_transfers += m.n_ic_transfers;
        totals.n_accum_ops += m.n_accum_ops;
        totals.n_macs += m.n_macs;
        layers.push(m);
    }
    Ok(MappingSummary { layers, totals })
}

/// Chip area breakdown in mm².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub chip_mm2: f64,
    pub cim_mm2: f64,
    pub ic_mm2: f64,
    pub adc_mm2: f64,
    pub accum_mm2: f64,
    pub other_mm2: f64,
}

impl AreaBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.cim_mm2 + self.ic_mm2 + self.adc_mm2 + self.accum_mm2 + self.other_mm2
    }

    pub fn adc_share(&self) -> f64 {
        self.adc_mm2 / self.chip_mm2
    }
}

const UM2_PER_MM2: f64 = 1e6;

pub fn area_report(mapping: &MappingSummary, hw: &HardwareConfig, adc_bits: u32) -> Result<AreaBreakdown> {
    let u = hw.units(adc_bits)?;
    let s = mapping.totals.subarrays as f64;
    let g = hw.subarray;
    let cim = s * (g.rows * g.cols) as f64 * 2.0 * hw.cim_cell_area_um2 / UM2_PER_MM2;
    let adc = s * hw.adcs_per_subarray() as f64 * u.adc.area_um2 / UM2_PER_MM2;
    let accum = s * u.accum.area_per_subarray_um2 / UM2_PER_MM2;
    let ic = if mapping.layers.is_empty() { 0.0 } else { u.ic.area_chip_um2 / UM2_PER_MM2 }
        + s * u.ic.area_per_subarray_um2 / UM2_PER_MM2;
    let other = if mapping.layers.is_empty() { 0.0 } else { u.periphery.area_chip_um2 / UM2_PER_MM2 }
        + s * u.periphery.area_per_subarray_um2 / UM2_PER_MM2
        + mapping.layers.len() as f64 * u.periphery.area_per_layer_um2 / UM2_PER_MM2;
    let mut a =
        AreaBreakdown { chip_mm2: 0.0, cim_mm2: cim, ic_mm2: ic, adc_mm2: adc, accum_mm2: accum, other_mm2: other };
    a.chip_mm2 = a.component_sum();
    Ok(a)
}

/// Latency of one pipeline stage (layer) in ns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    pub buffer_ns: f64,
    pub ic_ns: f64,
    pub adc_ns: f64,
    pub accum_ns: f64,
}

impl StageLatency {
    pub fn total_ns(&self) -> f64 {
        self.buffer_ns + self.ic_ns + self.adc_ns + self.accum_ns
    }
}

/// Per-image latency. Under pipelining the components are those of the
/// bottleneck stage, so they still add up to the total.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub clock_ns: f64,
    pub total_ms: f64,
    pub buffer_ms: f64,
    pub ic_ms: f64,
    pub adc_ms: f64,
    pub accum_ms: f64,
    pub bottleneck_layer: Option<usize>,
}

impl LatencyBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.buffer_ms + self.ic_ms + self.adc_ms + self.accum_ms
    }
}

pub fn stage_latencies(mapping: &MappingSummary, hw: &HardwareConfig, adc_bits: u32) -> Result<Vec<StageLatency>> {
    let u = hw.units(adc_bits)?;
    Ok(mapping
        .layers
        .iter()
        .map(|m| {
            let d = m.replicas as f64;
            let s = m.subarrays as f64;
            StageLatency {
                buffer_ns: (m.n_buffer_accesses as f64 / d * u.buffer.cycles_per_access
                    + s * u.buffer.cycles_per_subarray)
                    * u.clock_ns,
                ic_ns: m.n_ic_transfers as f64 / d * u.ic.latency_ns + s * u.ic.latency_per_subarray_ns,
                adc_ns: m.n_reads as f64 * hw.mux_ratio as f64 * u.adc.latency_ns,
                accum_ns: m.n_accum_ops as f64 / d * u.accum.latency_ns,
            }
        })
        .collect())
}

/// Pipelined: the slowest stage (ties to the lowest layer). Otherwise the
/// sum of all stages.
pub fn combine_stages(stages: &[StageLatency], pipeline: bool, clock_ns: f64) -> LatencyBreakdown {
    const NS_PER_MS: f64 = 1e6;
    let (sel, bottleneck) = if pipeline {
        let mut best: Option<usize> = None;
        for (i, s) in stages.iter().enumerate() {
            if best.is_none_or(|b| s.total_ns() > stages[b].total_ns()) {
                best = Some(i);
            }
        }
        (best.map(|b| stages[b]).unwrap_or_default(), best)
    } else {
        let sum = stages.iter().fold(StageLatency::default(), |a, s| StageLatency {
            buffer_ns: a.buffer_ns + s.buffer_ns,
            ic_ns: a.ic_ns + s.ic_ns,
            adc_ns: a.adc_ns + s.adc_ns,
            accum_ns: a.accum_ns + s.accum_ns,
        });
        (sum, None)
    };
    let mut l = LatencyBreakdown {
        clock_ns,
        total_ms: 0.0,
        buffer_ms: sel.buffer_ns / NS_PER_MS,
        ic_ms: sel.ic_ns / NS_PER_MS,
        adc_ms: sel.adc_ns / NS_PER_MS,
        accum_ms: sel.accum_ns / NS_PER_MS,
        bottleneck_layer: bottleneck,
    };
    l.total_ms = l.component_sum();
    l
}

pub fn latency_report(mapping: &MappingSummary, hw: &HardwareConfig, adc_bits: u32) -> Result<LatencyBreakdown> {
    let stages = stage_latencies(mapping, hw, adc_bits)?;
    Ok(combine_stages(&stages, hw.pipeline, hw.units(adc_bits)?.clock_ns))
}

/// Per-image energy in µJ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total_uj: f64,
    pub dynamic_uj: f64,
    pub leakage_uj: f64,
    pub buffer_uj: f64,
    pub ic_uj: f64,
    pub adc_uj: f64,
    pub accum_uj: f64,
    /// Array read energy not attributed to the other components.
    pub other_uj: f64,
}

impl EnergyBreakdown {
    pub fn dynamic_component_sum(&self) -> f64 {
        self.buffer_uj + self.ic_uj + self.adc_uj + self.accum_uj + self.other_uj
    }
}

pub fn energy_report(
    mapping: &MappingSummary,
    hw: &HardwareConfig,
    adc_bits: u32,
    area: &AreaBreakdown,
    latency: &LatencyBreakdown,
) -> Result<EnergyBreakdown> {
    const PJ_PER_UJ: f64 = 1e6;
    let u = hw.units(adc_bits)?;
    let t = &mapping.totals;
    let s = t.subarrays as f64;
    let mut e = EnergyBreakdown {
        buffer_uj: (t.n_buffer_accesses as f64 * u.buffer.energy_pj + s * u.buffer.energy_per_subarray_pj) / PJ_PER_UJ,
        ic_uj: (t.n_ic_transfers as f64 * u.ic.energy_pj + s * u.ic.energy_per_subarray_pj) / PJ_PER_UJ,
        adc_uj: t.n_adc_convs_per_image as f64 * u.adc.energy_pj / PJ_PER_UJ,
        accum_uj: t.n_accum_ops as f64 * u.accum.energy_pj / PJ_PER_UJ,
        other_uj: t.n_macs as f64 * u.array_energy_pj / PJ_PER_UJ,
        // W/mm² * mm² * ms = mJ
        leakage_uj: hw.leakage_w_per_mm2 * area.chip_mm2 * latency.total_ms * 1e3,
        ..Default::default()
    };
    e.dynamic_uj = e.dynamic_component_sum();
    e.total_uj = e.dynamic_uj + e.leakage_uj;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub fps: f64,
    pub tops: f64,
    pub tops_per_w: f64,
    pub tops_per_cm2: f64,
}

/// Throughput and efficiency; pure definitions of the inputs.
pub fn metrics(
    area: &AreaBreakdown,
    latency: &LatencyBreakdown,
    energy: &EnergyBreakdown,
    mapping: &MappingSummary,
) -> Metrics {
    let fps = 1e3 / latency.total_ms;
    let tops = 2.0 * mapping.totals.n_macs as f64 * fps * 1e-12;
    let watts = energy.total_uj * 1e-6 * fps;
    Metrics { fps, tops, tops_per_w: tops / watts, tops_per_cm2: tops / (area.chip_mm2 / 100.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipReport {
    pub model: String,
    pub adc_bits: u32,
    pub area: AreaBreakdown,
    pub latency: LatencyBreakdown,
    pub energy: EnergyBreakdown,
    pub metrics: Metrics,
}

pub fn chip_report_from_mapping(
    name: &str,
    mapping: &MappingSummary,
    hw: &HardwareConfig,
    adc_bits: u32,
) -> Result<ChipReport> {
    let area = area_report(mapping, hw, adc_bits)?;
    let latency = latency_report(mapping, hw, adc_bits)?;
    let energy = energy_report(mapping, hw, adc_bits, &area, &latency)?;
    let metrics = metrics(&area, &latency, &energy, mapping);
    Ok(ChipReport { model: name.to_string(), adc_bits, area, latency, energy, metrics })
}

/// Full report for one network at one ADC resolution.
pub fn chip_report(topo: &Topology, hw: &HardwareConfig, adc_bits: u32) -> Result<ChipReport> {
    let mapping = compute_mapping(topo, hw)?;
    chip_report_from_mapping(&topo.name, &mapping, hw, adc_bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::LayerDescriptor;

    fn unit_hw() -> HardwareConfig {
        let u = UnitCosts { clock_ns: 1.0, ..Default::default() };
        HardwareConfig {
            name: "unit".into(),
            subarray: Geometry::new(128, 128),
            mux_ratio: 8,
            pipeline: true,
            replication: Replication::default(),
            cim_cell_area_um2: 0.0,
            leakage_w_per_mm2: 0.0,
            resolutions: BTreeMap::from([(3, u)]),
        }
    }

    #[test]
    fn fc_512_to_1000() {
        let topo =
            Topology { name: "fc".into(), class_count: 1000, layers: vec![LayerDescriptor::fc(512, 1000).logits()] };
        let m = compute_mapping(&topo, &unit_hw()).unwrap();
        assert_eq!(m.layers[0].n_tiles, 32);
        assert_eq!(m.layers[0].n_adc_convs_per_image, 512);
    }

    #[test]
    fn conv_576_fan_in() {
        let l = LayerDescriptor::conv((18, 18, 64), 64, 3);
        let topo = Topology {
            name: "c".into(),
            class_count: 10,
            layers: vec![l, LayerDescriptor::fc(16 * 16 * 64, 10).logits()],
        };
        let m = compute_mapping(&topo, &unit_hw()).unwrap();
        assert_eq!(m.layers[0].fan_in, 576);
        assert_eq!(m.layers[0].n_tiles, 5);
        assert_eq!(m.layers[0].positions, 256);
    }

    #[test]
    fn empty_network_is_all_zero() {
        let topo = Topology { name: "e".into(), class_count: 0, layers: vec![] };
        let hw = unit_hw();
        let m = compute_mapping(&topo, &hw).unwrap();
        assert_eq!(m, MappingSummary::default());
        let a = area_report(&m, &hw, 3).unwrap();
        assert_eq!(a, AreaBreakdown::default());
    }

    #[test]
    fn pipelined_takes_slowest_stage() {
        let s = |v| StageLatency { buffer_ns: v, ..Default::default() };
        let stages = [s(3e6), s(5e6)];
        let p = combine_stages(&stages, true, 1.0);
        let q = combine_stages(&stages, false, 1.0);
        assert_eq!((p.total_ms, p.bottleneck_layer), (5.0, Some(1)));
        assert_eq!(q.total_ms, 8.0);
        let one = [s(2e6)];
        assert_eq!(combine_stages(&one, true, 1.0).total_ms, combine_stages(&one, false, 1.0).total_ms);
    }

    #[test]
    fn replicas_are_capped() {
        let r = Replication { max_replicas: 16, positions_per_replica: 33 };
        assert_eq!(r.replicas(1), 1);
        assert_eq!(r.replicas(33), 1);
        assert_eq!(r.replicas(34), 2);
        assert_eq!(r.replicas(3025), 16);
    }

    #[test]
    fn unit_rows_round_trip_through_values() {
        let mut u = UnitCosts { clock_ns: 2.0, array_energy_pj: 0.5, ..Default::default() };
        u.ic.energy_per_subarray_pj = 3.0;
        u.periphery.area_per_layer_um2 = 7.0;
        assert_eq!(UnitCosts::from_values(u.values()), u);
        let v = UnitCosts { clock_ns: 1.0, array_energy_pj: 0.9, ..Default::default() };
        let m = u.max(&v);
        assert_eq!((m.clock_ns, m.array_energy_pj, m.ic.energy_per_subarray_pj), (2.0, 0.9, 3.0));
    }

    #[test]
    fn mux_must_divide_columns() {
        let mut hw = unit_hw();
        hw.mux_ratio = 7;
        assert!(hw.validate().is_err());
    }
}
