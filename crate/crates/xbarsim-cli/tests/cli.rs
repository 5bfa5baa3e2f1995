use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use xbarsim::cost::{chip_report, HardwareConfig};
use xbarsim::dataset::load_dataset;
use xbarsim::engine::{ExecutionConfig, Simulator};
use xbarsim::ir::load_model;
use xbarsim::xbar::ClipPolicy;
use xbarsim::zoo;
use xbarsim_cli::fit::{fit, template};
use xbarsim_cli::outputs::{read_csv, recheck_hardware, ENERGY_CSV};
use xbarsim_cli::plots::{SeriesFile, INDEX_JSON, PLOTS_DIR};
use xbarsim_cli::sweep::{run_accuracy_sweep, run_hardware_sweep, subsample, BitRange};
use xbarsim_cli::targets::Targets;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn shipped_hw() -> PathBuf {
    root().join("configs/calibrated.json")
}

fn simulate(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_simulate")).args(args).current_dir(root()).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn argument_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let hw = shipped_hw();
    let hw = hw.to_str().unwrap();
    let (code, err) = simulate(&["hardware", "--model", "zoo:alexnet", "--hw", hw, "--adc", "8..3", "--out", out]);
    assert_eq!(code, 2, "{err}");
    let (code, err) = simulate(&["accuracy", "--model", "zoo:alexnet", "--dataset", "fixtures/digits", "--out", out]);
    assert_eq!(code, 2, "{err}");
    let (code, err) = simulate(&["hardware", "--model", "zoo:nosuchnet", "--hw", hw, "--out", out]);
    assert_eq!(code, 2, "{err}");

    let mut partial = HardwareConfig::load(shipped_hw()).unwrap();
    partial.resolutions.remove(&5);
    let p = tmp.path().join("partial.json");
    partial.save(&p).unwrap();
    let (code, err) =
        simulate(&["hardware", "--model", "zoo:alexnet", "--hw", p.to_str().unwrap(), "--adc", "3..8", "--out", out]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("A=5"), "{err}");
}

#[test]
fn missing_inputs_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let (code, err) =
        simulate(&["accuracy", "--model", "fixtures/tiny-alexnet", "--dataset", "fixtures/nowhere", "--out", out]);
    assert_eq!(code, 3, "{err}");
    let (code, err) = simulate(&["hardware", "--model", "zoo:alexnet", "--hw", "configs/absent.json", "--out", out]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn hardware_row_equals_direct_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = simulate(&[
        "hardware",
        "--model",
        "zoo:resnet18",
        "--hw",
        shipped_hw().to_str().unwrap(),
        "--adc",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let hw = HardwareConfig::load(shipped_hw()).unwrap();
    let direct = chip_report(&zoo::resnet18(), &hw, 3).unwrap();
    let (_, rows) = read_csv(&tmp.path().join(ENERGY_CSV)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "resnet18");
    let vals: Vec<f64> = rows[0][2..].iter().map(|v| v.parse().unwrap()).collect();
    let e = &direct.energy;
    assert_eq!(
        vals,
        vec![e.total_uj, e.dynamic_uj, e.leakage_uj, e.buffer_uj, e.ic_uj, e.adc_uj, e.accum_uj, e.other_uj]
    );
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path, workers: &str| {
        let (code, err) = simulate(&[
            "all",
            "--model",
            "fixtures/tiny-resnet",
            "--dataset",
            "fixtures/digits",
            "--hw",
            shipped_hw().to_str().unwrap(),
            "--input-precision",
            "2..3",
            "--adc",
            "4..5",
            "--subsample",
            "150",
            "--seed",
            "7",
            "--workers",
            workers,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        read_all(dir)
    };
    let a = run(&tmp.path().join("a"), "1");
    let b = run(&tmp.path().join("b"), "3");
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn single_cell_grid_equals_direct_evaluation() {
    let net = load_model(root().join("fixtures/tiny-densenet")).unwrap();
    let data = load_dataset(root().join("fixtures/digits")).unwrap();
    let idx = subsample(data.len(), Some(300), 3);
    let grid = run_accuracy_sweep(
        &net,
        &data,
        &idx,
        BitRange::single(3).unwrap(),
        BitRange::single(5).unwrap(),
        ClipPolicy::FullRange,
    )
    .unwrap();
    assert_eq!(grid.cells.len(), 1);
    let sim = Simulator::new(&net, ExecutionConfig::new(3, 5).unwrap()).unwrap();
    let acc = sim.evaluate_accuracy(&data, Some(&idx)).unwrap();
    assert_eq!((grid.cells[0].correct, grid.cells[0].total), (acc.correct, acc.total));
}

#[test]
fn more_input_bits_do_not_hurt_at_fine_converters() {
    let net = load_model(root().join("fixtures/tiny-alexnet")).unwrap();
    let data = load_dataset(root().join("fixtures/digits")).unwrap();
    let idx = subsample(data.len(), Some(500), 0);
    let grid = run_accuracy_sweep(
        &net,
        &data,
        &idx,
        BitRange::new(1, 4).unwrap(),
        BitRange::single(8).unwrap(),
        ClipPolicy::FullRange,
    )
    .unwrap();
    assert!(grid.cell(4, 8).unwrap().accuracy() >= grid.cell(1, 8).unwrap().accuracy());
}

#[test]
fn plot_series_reshape_the_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = simulate(&[
        "all",
        "--model",
        "fixtures/tiny-alexnet",
        "--dataset",
        "fixtures/digits",
        "--hw",
        shipped_hw().to_str().unwrap(),
        "--input-precision",
        "1..3",
        "--adc",
        "3..4",
        "--subsample",
        "100",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let plots = tmp.path().join(PLOTS_DIR);
    let index: Vec<SeriesFile> = serde_json::from_str(&fs::read_to_string(plots.join(INDEX_JSON)).unwrap()).unwrap();
    let acc = index.iter().find(|s| s.file == "accuracy_vs_adc.csv").unwrap();
    assert_eq!(acc.series, vec!["B1", "B2", "B3"]);
    let (header, rows) = read_csv(&plots.join(&acc.file)).unwrap();
    assert_eq!(header, vec!["adc_bits", "B1", "B2", "B3"]);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), vec!["3", "4"]);

    // The grid CSV is B-major; the plot CSV is its transpose.
    let (_, grid) = read_csv(&tmp.path().join("accuracy.csv")).unwrap();
    for (bi, g) in grid.iter().enumerate() {
        for (ai, r) in rows.iter().enumerate() {
            assert_eq!(g[1 + ai], r[1 + bi]);
        }
    }
    for s in &index {
        let log = s.file.ends_with("area_vs_adc.csv") || s.file.ends_with("energy_vs_adc.csv");
        assert_eq!(s.log_scale, log, "{}", s.file);
        assert!(plots.join(&s.file).exists());
    }
    assert!(index.iter().any(|s| s.file == "tiny-alexnet_latency_vs_adc.csv"));
    assert!(tmp.path().join("report.md").exists());
}

#[test]
fn tampered_tables_fail_the_recheck() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = simulate(&[
        "hardware",
        "--model",
        "zoo:densenet28",
        "--hw",
        shipped_hw().to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    recheck_hardware(tmp.path()).unwrap();
    let path = tmp.path().join(ENERGY_CSV);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    let ic: f64 = cells[6].parse().unwrap();
    cells[6] = (ic * 1.5).to_string();
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let e = recheck_hardware(tmp.path()).unwrap_err();
    assert_eq!(e.exit_code(), 4, "{e}");
}

#[test]
fn hardware_sweep_covers_requested_resolutions() {
    let hw = HardwareConfig::load(shipped_hw()).unwrap();
    let r = run_hardware_sweep(&zoo::alexnet(), &hw, BitRange::new(3, 8).unwrap()).unwrap();
    assert_eq!(r.iter().map(|r| r.adc_bits).collect::<Vec<_>>(), vec![3, 4, 5, 6, 7, 8]);
    assert!(run_hardware_sweep(&zoo::alexnet(), &hw, BitRange::new(3, 12).unwrap()).is_err());
}

#[test]
fn fit_reproduces_the_shipped_config() {
    let targets = Targets::load(root().join("configs/targets.json")).unwrap();
    let fitted = fit(&targets, &template()).unwrap();
    assert_eq!(fitted, HardwareConfig::load(shipped_hw()).unwrap());
}
