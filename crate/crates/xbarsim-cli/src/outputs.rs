//! Result files and their post-write re-checks.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! re-parsed file holds exactly the values that were computed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use xbarsim::cost::ChipReport;

use crate::error::{Error, Result};
use crate::sweep::AccuracyGrid;

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const ACCURACY_JSON: &str = "accuracy.json";
pub const HARDWARE_JSON: &str = "hardware.json";
pub const AREA_CSV: &str = "area.csv";
pub const LATENCY_CSV: &str = "latency.csv";
pub const ENERGY_CSV: &str = "energy.csv";
pub const METRICS_CSV: &str = "metrics.csv";

pub const AREA_HEADER: [&str; 8] =
    ["model", "adc_bits", "chip_mm2", "cim_mm2", "ic_mm2", "adc_mm2", "accum_mm2", "other_mm2"];
pub const LATENCY_HEADER: [&str; 9] =
    ["model", "adc_bits", "clock_ns", "total_ms", "buffer_ms", "ic_ms", "adc_ms", "accum_ms", "bottleneck_layer"];
pub const ENERGY_HEADER: [&str; 10] = [
    "model",
    "adc_bits",
    "total_uj",
    "dynamic_uj",
    "leakage_uj",
    "buffer_uj",
    "ic_uj",
    "adc_uj",
    "accum_uj",
    "other_uj",
];
pub const METRICS_HEADER: [&str; 6] = ["model", "adc_bits", "fps", "tops", "tops_per_w", "tops_per_cm2"];

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    w.write_record(header).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let header = r.headers().map_err(|e| Error::format(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(|e| Error::format(path, e)))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn num(path: &Path, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::format(path, format!("not a number: {s:?}")))
}

/// `accuracy.csv` (B rows × A columns) and `accuracy.json` (full grid).
pub fn write_accuracy(grid: &AccuracyGrid, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut header = vec!["input_bits".to_string()];
    header.extend(grid.adc_bits.values().map(|a| format!("A{a}")));
    header.push("exact".into());
    let rows: Vec<Vec<String>> = grid
        .input_bits
        .values()
        .map(|b| {
            let mut row = vec![b.to_string()];
            row.extend(
                grid.adc_bits.values().map(|a| grid.cell(b, a).map_or(String::new(), |c| c.accuracy().to_string())),
            );
            row.push(grid.exact(b).map_or(String::new(), |c| c.accuracy().to_string()));
            row
        })
        .collect();
    let csv_path = dir.join(ACCURACY_CSV);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&csv_path, &header, &rows)?;
    let json_path = dir.join(ACCURACY_JSON);
    write_json(&json_path, grid)?;
    Ok(vec![csv_path, json_path])
}

/// One CSV per breakdown family plus `hardware.json` with the full reports.
pub fn write_hardware(reports: &[ChipReport], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let key = |r: &ChipReport| vec![r.model.clone(), r.adc_bits.to_string()];
    let with = |r: &ChipReport, vals: &[f64]| -> Vec<String> {
        let mut row = key(r);
        row.extend(vals.iter().map(f64::to_string));
        row
    };
    let area: Vec<_> = reports
        .iter()
        .map(|r| {
            let a = &r.area;
            with(r, &[a.chip_mm2, a.cim_mm2, a.ic_mm2, a.adc_mm2, a.accum_mm2, a.other_mm2])
        })
        .collect();
    let latency: Vec<_> = reports
        .iter()
        .map(|r| {
            let l = &r.latency;
            let mut row = with(r, &[l.clock_ns, l.total_ms, l.buffer_ms, l.ic_ms, l.adc_ms, l.accum_ms]);
            row.push(l.bottleneck_layer.map_or(String::new(), |b| b.to_string()));
            row
        })
        .collect();
    let energy: Vec<_> = reports
        .iter()
        .map(|r| {
            let e = &r.energy;
            with(r, &[e.total_uj, e.dynamic_uj, e.leakage_uj, e.buffer_uj, e.ic_uj, e.adc_uj, e.accum_uj, e.other_uj])
        })
        .collect();
    let metrics: Vec<_> = reports
        .iter()
        .map(|r| {
            let m = &r.metrics;
            with(r, &[m.fps, m.tops, m.tops_per_w, m.tops_per_cm2])
        })
        .collect();
    let files = [
        (AREA_CSV, &AREA_HEADER[..], area),
        (LATENCY_CSV, &LATENCY_HEADER[..], latency),
        (ENERGY_CSV, &ENERGY_HEADER[..], energy),
        (METRICS_CSV, &METRICS_HEADER[..], metrics),
    ];
    let mut written = Vec::new();
    for (name, header, rows) in files {
        let p = dir.join(name);
        write_csv(&p, header, &rows)?;
        written.push(p);
    }
    let p = dir.join(HARDWARE_JSON);
    write_json(&p, &reports)?;
    written.push(p);
    Ok(written)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

fn parsed_rows(path: &Path, expect: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    if header != expect {
        return Err(Error::Invariant(format!("{}: unexpected header {header:?}", path.display())));
    }
    rows.iter()
        .map(|r| r[1..].iter().map(|v| if v.is_empty() { Ok(f64::NAN) } else { num(path, v) }).collect())
        .collect()
}

/// Re-reads the hardware CSVs and checks that every breakdown still adds up
/// and the metrics follow from the totals.
pub fn recheck_hardware(dir: &Path) -> Result<()> {
    let bad = |file: &str, row: usize, what: &str| Error::Invariant(format!("{file} row {row}: {what}"));
    let area = parsed_rows(&dir.join(AREA_CSV), &AREA_HEADER)?;
    for (i, r) in area.iter().enumerate() {
        if !close(r[1], r[2..7].iter().sum()) {
            return Err(bad(AREA_CSV, i, "chip area is not the sum of its components"));
        }
    }
    let lat = parsed_rows(&dir.join(LATENCY_CSV), &LATENCY_HEADER)?;
    for (i, r) in lat.iter().enumerate() {
        if !close(r[2], r[3..7].iter().sum()) {
            return Err(bad(LATENCY_CSV, i, "total latency is not the sum of its components"));
        }
    }
    let en = parsed_rows(&dir.join(ENERGY_CSV), &ENERGY_HEADER)?;
    for (i, r) in en.iter().enumerate() {
        if !close(r[2], r[4..9].iter().sum()) {
            return Err(bad(ENERGY_CSV, i, "dynamic energy is not the sum of its components"));
        }
        if !close(r[1], r[2] + r[3]) {
            return Err(bad(ENERGY_CSV, i, "total energy is not dynamic plus leakage"));
        }
    }
    let met = parsed_rows(&dir.join(METRICS_CSV), &METRICS_HEADER)?;
    if met.len() != area.len() || lat.len() != area.len() || en.len() != area.len() {
        return Err(Error::Invariant("hardware tables have different row counts".into()));
    }
    for (i, r) in met.iter().enumerate() {
        if !close(r[1] * lat[i][2], 1e3) {
            return Err(bad(METRICS_CSV, i, "fps is not the inverse of latency"));
        }
        let watts = en[i][1] * 1e-6 * r[1];
        if !close(r[3], r[2] / watts) || !close(r[4], r[2] / (area[i][1] / 100.0)) {
            return Err(bad(METRICS_CSV, i, "efficiency does not follow from throughput"));
        }
    }
    Ok(())
}

/// Re-reads the accuracy grid and checks ranges and counts.
pub fn recheck_accuracy(dir: &Path) -> Result<()> {
    let grid: AccuracyGrid = read_json(&dir.join(ACCURACY_JSON))?;
    let expected = grid.input_bits.len() * grid.adc_bits.len();
    if grid.cells.len() != expected || grid.exact.len() != grid.input_bits.len() {
        return Err(Error::Invariant(format!("accuracy grid has {} cells, expected {expected}", grid.cells.len())));
    }
    if grid.cells.iter().chain(&grid.exact).any(|c| c.total == 0 || c.correct > c.total) {
        return Err(Error::Invariant("accuracy cell with impossible counts".into()));
    }
    let (header, rows) = read_csv(&dir.join(ACCURACY_CSV))?;
    if rows.len() != grid.input_bits.len() || header.len() != grid.adc_bits.len() + 2 {
        return Err(Error::Invariant("accuracy.csv does not match accuracy.json".into()));
    }
    for (row, b) in rows.iter().zip(grid.input_bits.values()) {
        for (v, a) in row[1..].iter().zip(grid.adc_bits.values()) {
            let cell = grid.cell(b, a).expect("count checked above");
            if num(&dir.join(ACCURACY_CSV), v)? != cell.accuracy() {
                return Err(Error::Invariant(format!("accuracy.csv cell B={b} A={a} differs from accuracy.json")));
            }
        }
    }
    Ok(())
}
