//! Human-readable `report.md` combining whichever sweeps were run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use xbarsim::cost::ChipReport;

use crate::error::{Error, Result};
use crate::sweep::AccuracyGrid;

pub const REPORT_MD: &str = "report.md";

fn table(out: &mut String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

pub fn render(accuracy: Option<&AccuracyGrid>, hardware: Option<&[ChipReport]>) -> String {
    let mut s = String::from("# Simulation report\n\n");
    if let Some(g) = accuracy {
        let total = g.cells.first().map_or(0, |c| c.total);
        let _ = writeln!(s, "## Accuracy: {}\n\n{total} samples, clip policy {:?}. Rows are input precision B, columns ADC resolution A.\n", g.model, g.clip);
        let mut header = vec!["B".to_string()];
        header.extend(g.adc_bits.values().map(|a| format!("A={a}")));
        header.push("exact".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = g.input_bits.values().map(|b| {
            let mut row = vec![b.to_string()];
            row.extend(
                g.adc_bits
                    .values()
                    .map(|a| g.cell(b, a).map_or("-".into(), |c| format!("{:.2}", 100.0 * c.accuracy()))),
            );
            row.push(g.exact(b).map_or("-".into(), |c| format!("{:.2}", 100.0 * c.accuracy())));
            row
        });
        table(&mut s, &header, rows);
    }
    if let Some(reports) = hardware {
        let f = |v: f64| format!("{v:.2}");
        let _ = writeln!(s, "## Chip area (mm²)\n");
        table(
            &mut s,
            &["model", "A", "chip", "CIM", "IC", "ADC", "accum", "other"],
            reports.iter().map(|r| {
                let a = &r.area;
                vec![
                    r.model.clone(),
                    r.adc_bits.to_string(),
                    f(a.chip_mm2),
                    f(a.cim_mm2),
                    f(a.ic_mm2),
                    f(a.adc_mm2),
                    f(a.accum_mm2),
                    f(a.other_mm2),
                ]
            }),
        );
        let _ = writeln!(s, "## Latency per image\n");
        table(
            &mut s,
            &["model", "A", "clock (ns)", "total (ms)", "buffer (ms)", "IC (ms)", "ADC (µs)", "accum (µs)"],
            reports.iter().map(|r| {
                let l = &r.latency;
                vec![
                    r.model.clone(),
                    r.adc_bits.to_string(),
                    f(l.clock_ns),
                    f(l.total_ms),
                    f(l.buffer_ms),
                    f(l.ic_ms),
                    f(l.adc_ms * 1e3),
                    f(l.accum_ms * 1e3),
                ]
            }),
        );
        let _ = writeln!(s, "## Energy per image (µJ)\n");
        table(
            &mut s,
            &["model", "A", "dynamic", "leakage", "buffer", "IC", "ADC", "accum", "other"],
            reports.iter().map(|r| {
                let e = &r.energy;
                vec![
                    r.model.clone(),
                    r.adc_bits.to_string(),
                    f(e.dynamic_uj),
                    f(e.leakage_uj),
                    f(e.buffer_uj),
                    f(e.ic_uj),
                    f(e.adc_uj),
                    f(e.accum_uj),
                    f(e.other_uj),
                ]
            }),
        );
        let _ = writeln!(s, "## Throughput and efficiency\n");
        table(
            &mut s,
            &["model", "A", "TOPS/W", "TOPS", "FPS", "TOPS/cm²"],
            reports.iter().map(|r| {
                let m = &r.metrics;
                vec![
                    r.model.clone(),
                    r.adc_bits.to_string(),
                    f(m.tops_per_w),
                    format!("{:.3}", m.tops),
                    f(m.fps),
                    f(m.tops_per_cm2),
                ]
            }),
        );
    }
    s
}

pub fn write_report(dir: &Path, accuracy: Option<&AccuracyGrid>, hardware: Option<&[ChipReport]>) -> Result<PathBuf> {
    let p = dir.join(REPORT_MD);
    fs::write(&p, render(accuracy, hardware)).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}
