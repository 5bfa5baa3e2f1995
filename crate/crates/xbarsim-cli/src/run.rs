//! `simulate` command line.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use xbarsim::cost::HardwareConfig;
use xbarsim::dataset::load_dataset;
use xbarsim::ir::load_model;

use crate::error::{Error, Result};
use crate::outputs::{recheck_accuracy, recheck_hardware, write_accuracy, write_hardware};
use crate::plots::emit_plots;
use crate::report::write_report;
use crate::sweep::{parse_clip, run_accuracy_sweep, run_hardware_sweep, subsample, BitRange, ModelSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Accuracy,
    Hardware,
    All,
}

/// Accuracy and hardware sweeps for BNNs on crossbar arrays.
#[derive(Debug, Parser)]
#[command(name = "simulate")]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub mode: Mode,
    /// Model bundle directory, or zoo:NAME (hardware only).
    #[arg(long)]
    pub model: String,
    /// Dataset directory (accuracy).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Hardware config JSON (hardware).
    #[arg(long)]
    pub hw: Option<PathBuf>,
    /// First-layer input precision range B.
    #[arg(long, default_value = "1..8")]
    pub input_precision: String,
    /// ADC resolution range A.
    #[arg(long, default_value = "3..8")]
    pub adc: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for dataset subsampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Evaluate on this many randomly chosen samples.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Converter clip policy: full or percentile:P.
    #[arg(long, default_value = "full")]
    pub calibration: String,
}

/// Runs a parsed command line; returns the files written.
pub fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let b: BitRange = args.input_precision.parse()?;
    let a: BitRange = args.adc.parse()?;
    let clip = parse_clip(&args.calibration)?;
    let source: ModelSource = args.model.parse()?;
    let want_acc = matches!(args.mode, Mode::Accuracy | Mode::All);
    let want_hw = matches!(args.mode, Mode::Hardware | Mode::All);
    if want_acc && matches!(source, ModelSource::Zoo(_)) {
        return Err(Error::Args("zoo descriptors carry no weights; accuracy needs a bundle".into()));
    }
    if want_acc && args.dataset.is_none() {
        return Err(Error::Args("accuracy mode needs --dataset".into()));
    }
    if want_hw && args.hw.is_none() {
        return Err(Error::Args("hardware mode needs --hw".into()));
    }
    if args.workers == Some(0) {
        return Err(Error::Args("--workers must be positive".into()));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = args.workers {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Args(e.to_string()))?
    };
    pool.install(|| {
        let mut written = Vec::new();
        let mut grid = None;
        let mut reports = None;
        if want_acc {
            let ModelSource::Bundle(dir) = &source else { unreachable!("rejected above") };
            let net = load_model(dir)?;
            let data = load_dataset(args.dataset.as_ref().expect("checked above"))?;
            let idx = subsample(data.len(), args.subsample, args.seed);
            let g = run_accuracy_sweep(&net, &data, &idx, b, a, clip)?;
            written.extend(write_accuracy(&g, &args.out)?);
            recheck_accuracy(&args.out)?;
            grid = Some(g);
        }
        if want_hw {
            let hw = HardwareConfig::load(args.hw.as_ref().expect("checked above"))?;
            let r = run_hardware_sweep(&source.topology()?, &hw, a)?;
            written.extend(write_hardware(&r, &args.out)?);
            recheck_hardware(&args.out)?;
            reports = Some(r);
        }
        written.extend(emit_plots(&args.out)?);
        written.push(write_report(&args.out, grid.as_ref(), reports.as_deref())?);
        Ok(written)
    })
}
