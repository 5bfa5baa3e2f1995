//! Least-squares fit of a [`HardwareConfig`] unit-cost table to reference
//! chip figures for the zoo networks.
//!
//! Every reported component is linear in its own unit costs once the
//! mapping counts are known, so each one is fitted separately by
//! non-negative least squares on relative error. Latency additionally
//! depends on which layer is the pipeline bottleneck; all assignments are
//! tried and the one with the lowest full-model error is kept.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use xbarsim::cost::{
    chip_report_from_mapping, combine_stages, compute_mapping, stage_latencies, HardwareConfig, LayerMapping,
    MappingSummary, Replication, UnitCosts,
};
use xbarsim::xbar::Geometry;
use xbarsim::zoo;

use crate::error::{Error, Result};
use crate::targets::{ModelTargets, Targets};

const UM2_PER_MM2: f64 = 1e6;
const PJ_PER_UJ: f64 = 1e6;
const NS_PER_MS: f64 = 1e6;
const NS_PER_US: f64 = 1e3;

/// Fixed architecture the unit costs are fitted for.
pub fn template() -> HardwareConfig {
    HardwareConfig {
        name: "calibrated".into(),
        subarray: Geometry::new(128, 128),
        mux_ratio: 8,
        pipeline: true,
        replication: Replication { max_replicas: 16, positions_per_replica: 33 },
        cim_cell_area_um2: 0.0,
        leakage_w_per_mm2: 0.0,
        resolutions: BTreeMap::new(),
    }
}

/// Non-negative least squares for a handful of unknowns: every support set
/// is solved unconstrained and the best feasible one wins.
pub fn nnls(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    let cost = |x: &[f64]| -> f64 {
        rows.iter().zip(rhs).map(|(r, b)| (r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).powi(2)).sum()
    };
    let mut best = vec![0.0; k];
    let mut best_cost = cost(&best);
    for mask in 1u32..(1 << k) {
        let cols: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
        let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
        let b = DVector::from_column_slice(rhs);
        let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) else { continue };
        if sol.iter().any(|v| !v.is_finite() || *v < 0.0) {
            continue;
        }
        let mut x = vec![0.0; k];
        for (j, &c) in cols.iter().enumerate() {
            x[c] = sol[j];
        }
        let c = cost(&x);
        if c < best_cost {
            best = x;
            best_cost = c;
        }
    }
    best
}

/// `nnls` on relative error: each row is divided by its target.
fn nnls_rel(rows: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let kept: Vec<&(Vec<f64>, f64)> = rows.iter().filter(|(_, t)| *t > 0.0).collect();
    let a: Vec<Vec<f64>> = kept.iter().map(|(r, t)| r.iter().map(|v| v / t).collect()).collect();
    nnls(&a, &vec![1.0; a.len()])
}

struct Net<'t> {
    mapping: MappingSummary,
    target: &'t ModelTargets,
}

impl Net<'_> {
    fn subarrays(&self) -> f64 {
        self.mapping.totals.subarrays as f64
    }
}

fn rel(fitted: f64, target: f64) -> f64 {
    if target == 0.0 {
        fitted
    } else {
        fitted / target - 1.0
    }
}

/// Fits every unit cost of `base` (geometry, mux and replication are kept)
/// to `targets`.
pub fn fit(targets: &Targets, base: &HardwareConfig) -> Result<HardwareConfig> {
    let mut nets = Vec::new();
    for (name, t) in &targets.models {
        let topo = zoo::by_name(name).ok_or_else(|| Error::Args(format!("no zoo network named {name}")))?;
        nets.push(Net { mapping: compute_mapping(&topo, base)?, target: t });
    }
    if nets.is_empty() {
        return Err(Error::Args("targets list no networks".into()));
    }
    let mut hw = base.clone();
    hw.resolutions.clear();
    let g = hw.subarray;
    let adcs = hw.adcs_per_subarray() as f64;

    let cell: Vec<(Vec<f64>, f64)> = nets
        .iter()
        .flat_map(|n| {
            n.target.area_mm2.iter().map(|a| (vec![n.subarrays() * (g.rows * g.cols * 2) as f64 / UM2_PER_MM2], a.cim))
        })
        .collect();
    hw.cim_cell_area_um2 = nnls_rel(&cell)[0];

    let mut prev: Option<UnitCosts> = None;
    for (r, &a) in targets.adc_bits.iter().enumerate() {
        let mut u = UnitCosts { clock_ns: targets.clock_ns[r], ..Default::default() };
        fit_area(&nets, r, adcs, &mut u);
        fit_energy(&nets, r, &mut u);
        fit_latency(&nets, r, &hw, a, &mut u)?;
        if let Some(p) = prev {
            u = u.max(&p);
        }
        prev = Some(u);
        hw.resolutions.insert(a, u);
    }

    // Leakage needs the final area and latency.
    let mut leak = Vec::new();
    for n in &nets {
        for (r, &a) in targets.adc_bits.iter().enumerate() {
            let rep = chip_report_from_mapping("", &n.mapping, &hw, a)?;
            leak.push((vec![rep.area.chip_mm2 * rep.latency.total_ms * 1e3], n.target.energy_uj[r].leakage));
        }
    }
    hw.leakage_w_per_mm2 = nnls_rel(&leak)[0];
    hw.validate()?;
    Ok(hw)
}

fn fit_area(nets: &[Net], r: usize, adcs: f64, u: &mut UnitCosts) {
    let rows = |f: &dyn Fn(&Net) -> (Vec<f64>, f64)| -> Vec<(Vec<f64>, f64)> { nets.iter().map(f).collect() };
    let x = nnls_rel(&rows(&|n| (vec![n.subarrays() * adcs / UM2_PER_MM2], n.target.area_mm2[r].adc)));
    u.adc.area_um2 = x[0];
    let x = nnls_rel(&rows(&|n| (vec![n.subarrays() / UM2_PER_MM2], n.target.area_mm2[r].accum)));
    u.accum.area_per_subarray_um2 = x[0];
    let x = nnls_rel(&rows(&|n| (vec![1.0 / UM2_PER_MM2, n.subarrays() / UM2_PER_MM2], n.target.area_mm2[r].ic)));
    (u.ic.area_chip_um2, u.ic.area_per_subarray_um2) = (x[0], x[1]);
    let x = nnls_rel(&rows(&|n| {
        let layers = n.mapping.layers.len() as f64;
        (vec![1.0 / UM2_PER_MM2, n.subarrays() / UM2_PER_MM2, layers / UM2_PER_MM2], n.target.area_mm2[r].other)
    }));
    u.periphery =
        xbarsim::cost::PeripheryUnit { area_chip_um2: x[0], area_per_subarray_um2: x[1], area_per_layer_um2: x[2] };
}

fn fit_energy(nets: &[Net], r: usize, u: &mut UnitCosts) {
    let rows = |f: &dyn Fn(&Net) -> (Vec<f64>, f64)| -> Vec<(Vec<f64>, f64)> { nets.iter().map(f).collect() };
    let x = nnls_rel(&rows(&|n| {
        let t = &n.mapping.totals;
        (vec![t.n_buffer_accesses as f64 / PJ_PER_UJ, n.subarrays() / PJ_PER_UJ], n.target.energy_uj[r].buffer)
    }));
    (u.buffer.energy_pj, u.buffer.energy_per_subarray_pj) = (x[0], x[1]);
    let x = nnls_rel(&rows(&|n| {
        let t = &n.mapping.totals;
        (vec![t.n_ic_transfers as f64 / PJ_PER_UJ, n.subarrays() / PJ_PER_UJ], n.target.energy_uj[r].ic)
    }));
    (u.ic.energy_pj, u.ic.energy_per_subarray_pj) = (x[0], x[1]);
    let x = nnls_rel(&rows(&|n| {
        (vec![n.mapping.totals.n_adc_convs_per_image as f64 / PJ_PER_UJ], n.target.energy_uj[r].adc)
    }));
    u.adc.energy_pj = x[0];
    let x = nnls_rel(&rows(&|n| (vec![n.mapping.totals.n_accum_ops as f64 / PJ_PER_UJ], n.target.energy_uj[r].accum)));
    u.accum.energy_pj = x[0];
    let x = nnls_rel(&rows(&|n| (vec![n.mapping.totals.n_macs as f64 / PJ_PER_UJ], n.target.energy_uj[r].residual())));
    u.array_energy_pj = x[0];
}

/// Weighted relative squared error of a latency breakdown. The µs-scale
/// converter and accumulation terms barely move the total and count less.
fn latency_score(nets: &[Net], r: usize, hw: &HardwareConfig, a: u32) -> Result<f64> {
    let mut score = 0.0;
    for n in nets {
        let l = combine_stages(&stage_latencies(&n.mapping, hw, a)?, hw.pipeline, hw.units(a)?.clock_ns);
        let t = &n.target.latency[r];
        score += 10.0 * rel(l.total_ms, t.total_ms).powi(2)
            + rel(l.buffer_ms, t.buffer_ms).powi(2)
            + rel(l.ic_ms, t.ic_ms).powi(2)
            + 0.1 * rel(l.adc_ms * 1e3, t.adc_us).powi(2)
            + 0.1 * rel(l.accum_ms * 1e3, t.accum_us).powi(2);
    }
    Ok(score)
}

/// One least-squares row: coefficients and target.
type Row = (Vec<f64>, f64);

fn fit_latency(nets: &[Net], r: usize, base: &HardwareConfig, a: u32, u: &mut UnitCosts) -> Result<()> {
    let mut hw = base.clone();
    let mux = hw.mux_ratio as f64;
    let clock = u.clock_ns;
    let sizes: Vec<usize> = nets.iter().map(|n| n.mapping.layers.len()).collect();
    let mut pick = vec![0usize; nets.len()];
    let mut best: Option<(f64, UnitCosts)> = None;
    loop {
        let stage = |f: &dyn Fn(&Net, &LayerMapping) -> Row| -> Vec<Row> {
            nets.iter().zip(&pick).map(|(n, &b)| f(n, &n.mapping.layers[b])).collect()
        };
        let mut c = *u;
        let x = nnls_rel(&stage(&|n, m| {
            let d = m.replicas as f64;
            let coef = vec![m.n_buffer_accesses as f64 / d * clock / NS_PER_MS, m.subarrays as f64 * clock / NS_PER_MS];
            (coef, n.target.latency[r].buffer_ms)
        }));
        (c.buffer.cycles_per_access, c.buffer.cycles_per_subarray) = (x[0], x[1]);
        let x = nnls_rel(&stage(&|n, m| {
            let d = m.replicas as f64;
            (vec![m.n_ic_transfers as f64 / d / NS_PER_MS, m.subarrays as f64 / NS_PER_MS], n.target.latency[r].ic_ms)
        }));
        (c.ic.latency_ns, c.ic.latency_per_subarray_ns) = (x[0], x[1]);
        let x = nnls_rel(&stage(&|n, m| (vec![m.n_reads as f64 * mux / NS_PER_US], n.target.latency[r].adc_us)));
        c.adc.latency_ns = x[0];
        let x = nnls_rel(&stage(&|n, m| {
            (vec![m.n_accum_ops as f64 / m.replicas as f64 / NS_PER_US], n.target.latency[r].accum_us)
        }));
        c.accum.latency_ns = x[0];

        hw.resolutions.insert(a, c);
        let s = latency_score(nets, r, &hw, a)?;
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, c));
        }

        // Next bottleneck assignment, odometer order.
        let mut i = 0;
        while i < pick.len() {
            pick[i] += 1;
            if pick[i] < sizes[i] {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
    }
    let (_, c) = best.expect("at least one assignment");
    u.buffer.cycles_per_access = c.buffer.cycles_per_access;
    u.buffer.cycles_per_subarray = c.buffer.cycles_per_subarray;
    u.ic.latency_ns = c.ic.latency_ns;
    u.ic.latency_per_subarray_ns = c.ic.latency_per_subarray_ns;
    u.adc.latency_ns = c.adc.latency_ns;
    u.accum.latency_ns = c.accum.latency_ns;
    Ok(())
}

/// One fitted figure next to its reference value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub model: String,
    pub adc_bits: u32,
    pub quantity: &'static str,
    pub target: f64,
    pub fitted: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        rel(self.fitted, self.target)
    }
}

/// Fitted-versus-reference comparison for every model, resolution and
/// reported quantity.
pub fn residuals(targets: &Targets, hw: &HardwareConfig) -> Result<Vec<Residual>> {
    let mut out = Vec::new();
    for (name, t) in &targets.models {
        let topo = zoo::by_name(name).ok_or_else(|| Error::Args(format!("no zoo network named {name}")))?;
        let mapping = compute_mapping(&topo, hw)?;
        for (r, &a) in targets.adc_bits.iter().enumerate() {
            let rep = chip_report_from_mapping(name, &mapping, hw, a)?;
            let (ar, l, e, m) = (&t.area_mm2[r], &t.latency[r], &t.energy_uj[r], &t.metrics[r]);
            let pairs: [(&'static str, f64, f64); 20] = [
                ("area.chip", ar.chip, rep.area.chip_mm2),
                ("area.cim", ar.cim, rep.area.cim_mm2),
                ("area.ic", ar.ic, rep.area.ic_mm2),
                ("area.adc", ar.adc, rep.area.adc_mm2),
                ("area.accum", ar.accum, rep.area.accum_mm2),
                ("area.other", ar.other, rep.area.other_mm2),
                ("latency.total", l.total_ms, rep.latency.total_ms),
                ("latency.buffer", l.buffer_ms, rep.latency.buffer_ms),
                ("latency.ic", l.ic_ms, rep.latency.ic_ms),
                ("latency.adc", l.adc_us, rep.latency.adc_ms * 1e3),
                ("latency.accum", l.accum_us, rep.latency.accum_ms * 1e3),
                ("energy.dynamic", e.dynamic, rep.energy.dynamic_uj),
                ("energy.leakage", e.leakage, rep.energy.leakage_uj),
                ("energy.buffer", e.buffer, rep.energy.buffer_uj),
                ("energy.ic", e.ic, rep.energy.ic_uj),
                ("energy.adc", e.adc, rep.energy.adc_uj),
                ("energy.accum", e.accum, rep.energy.accum_uj),
                ("metrics.fps", m.fps, rep.metrics.fps),
                ("metrics.tops", m.tops, rep.metrics.tops),
                ("metrics.tops_per_w", m.tops_per_w, rep.metrics.tops_per_w),
            ];
            for (quantity, target, fitted) in pairs {
                out.push(Residual { model: name.clone(), adc_bits: a, quantity, target, fitted });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_recovers_exact_solution() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let x = nnls(&rows, &[2.0, 3.0, 5.0]);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn nnls_clamps_negative_coordinates() {
        // Unconstrained optimum has x1 < 0.
        let rows = vec![vec![1.0, 1.0], vec![1.0, 2.0]];
        let x = nnls(&rows, &[2.0, 1.0]);
        assert_eq!(x[1], 0.0);
        assert!(x[0] > 0.0);
    }
}
