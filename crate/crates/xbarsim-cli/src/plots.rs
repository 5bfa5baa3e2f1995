//! Plot-ready series derived from sweep outputs, one CSV per figure family
//! plus `plots/index.json` describing them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xbarsim::cost::ChipReport;

use crate::error::{Error, Result};
use crate::outputs::{read_json, write_json, ACCURACY_JSON, HARDWARE_JSON};
use crate::sweep::AccuracyGrid;

pub const PLOTS_DIR: &str = "plots";
pub const INDEX_JSON: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub file: String,
    pub title: String,
    pub x: String,
    /// Column names after `x`, one per series.
    pub series: Vec<String>,
    pub unit: String,
    pub log_scale: bool,
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    w.write_record(header).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(f64::to_string)).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Family {
    stem: &'static str,
    title: &'static str,
    unit: &'static str,
    log_scale: bool,
    series: &'static [&'static str],
    values: fn(&ChipReport) -> Vec<f64>,
}

const FAMILIES: [Family; 4] = [
    Family {
        stem: "area",
        title: "Chip area breakdown vs ADC resolution",
        unit: "mm2",
        log_scale: true,
        series: &["cim", "ic", "adc", "accum", "other", "chip"],
        values: |r| {
            let a = &r.area;
            vec![a.cim_mm2, a.ic_mm2, a.adc_mm2, a.accum_mm2, a.other_mm2, a.chip_mm2]
        },
    },
    Family {
        stem: "latency",
        title: "Per-image latency breakdown vs ADC resolution",
        unit: "ms",
        log_scale: false,
        series: &["buffer", "ic", "adc", "accum", "total"],
        values: |r| {
            let l = &r.latency;
            vec![l.buffer_ms, l.ic_ms, l.adc_ms, l.accum_ms, l.total_ms]
        },
    },
    Family {
        stem: "energy",
        title: "Per-image energy breakdown vs ADC resolution",
        unit: "uJ",
        log_scale: true,
        series: &["buffer", "ic", "adc", "accum", "other", "leakage", "total"],
        values: |r| {
            let e = &r.energy;
            vec![e.buffer_uj, e.ic_uj, e.adc_uj, e.accum_uj, e.other_uj, e.leakage_uj, e.total_uj]
        },
    },
    Family {
        stem: "efficiency",
        title: "Throughput and efficiency vs ADC resolution",
        unit: "mixed",
        log_scale: false,
        series: &["fps", "tops", "tops_per_w", "tops_per_cm2"],
        values: |r| {
            let m = &r.metrics;
            vec![m.fps, m.tops, m.tops_per_w, m.tops_per_cm2]
        },
    },
];

/// Reads whatever sweep outputs exist in `dir` and writes their series to
/// `dir/plots`. Fails when neither sweep has been run.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let acc_path = dir.join(ACCURACY_JSON);
    let hw_path = dir.join(HARDWARE_JSON);
    if !acc_path.exists() && !hw_path.exists() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no sweep outputs to plot")));
    }
    let out = dir.join(PLOTS_DIR);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut index = Vec::new();
    let mut written = Vec::new();

    if acc_path.exists() {
        let grid: AccuracyGrid = read_json(&acc_path)?;
        let series: Vec<String> = grid.input_bits.values().map(|b| format!("B{b}")).collect();
        let rows: Vec<Vec<f64>> = grid
            .adc_bits
            .values()
            .map(|a| {
                let mut row = vec![a as f64];
                row.extend(grid.input_bits.values().map(|b| grid.cell(b, a).map_or(f64::NAN, |c| c.accuracy())));
                row
            })
            .collect();
        let file = "accuracy_vs_adc.csv".to_string();
        let header: Vec<String> = std::iter::once("adc_bits".to_string()).chain(series.iter().cloned()).collect();
        write_table(&out.join(&file), &header, &rows)?;
        written.push(out.join(&file));
        index.push(SeriesFile {
            file,
            title: format!("{} accuracy vs ADC resolution, one line per input precision", grid.model),
            x: "adc_bits".into(),
            series,
            unit: "fraction".into(),
            log_scale: false,
        });
    }

    if hw_path.exists() {
        let reports: Vec<ChipReport> = read_json(&hw_path)?;
        let mut models: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
        models.dedup();
        for model in models {
            let mine: Vec<&ChipReport> = reports.iter().filter(|r| r.model == model).collect();
            for f in &FAMILIES {
                let rows: Vec<Vec<f64>> =
                    mine.iter().map(|r| std::iter::once(r.adc_bits as f64).chain((f.values)(r)).collect()).collect();
                let file = format!("{}_{}_vs_adc.csv", model, f.stem);
                let series: Vec<String> = f.series.iter().map(|s| s.to_string()).collect();
                let header: Vec<String> =
                    std::iter::once("adc_bits".to_string()).chain(series.iter().cloned()).collect();
                write_table(&out.join(&file), &header, &rows)?;
                written.push(out.join(&file));
                index.push(SeriesFile {
                    file,
                    title: format!("{model}: {}", f.title),
                    x: "adc_bits".into(),
                    series,
                    unit: f.unit.into(),
                    log_scale: f.log_scale,
                });
            }
        }
    }

    let p = out.join(INDEX_JSON);
    write_json(&p, &index)?;
    written.push(p);
    Ok(written)
}
