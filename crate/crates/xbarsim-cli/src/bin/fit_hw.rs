use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use xbarsim_cli::fit::{fit, residuals, template};
use xbarsim_cli::targets::Targets;
use xbarsim_cli::Error;

/// Fit the unit-cost table to reference chip figures.
#[derive(Parser)]
#[command(name = "fit-hw")]
struct Args {
    /// Reference figures (JSON).
    #[arg(long, default_value = "configs/targets.json")]
    targets: PathBuf,
    /// Where to write the fitted hardware config.
    #[arg(long, default_value = "configs/calibrated.json")]
    out: PathBuf,
    /// Print every residual, not just the worst per quantity.
    #[arg(long)]
    verbose: bool,
}

fn run(args: &Args) -> Result<(), Error> {
    let targets = Targets::load(&args.targets)?;
    let hw = fit(&targets, &template())?;
    hw.save(&args.out)?;
    let res = residuals(&targets, &hw)?;
    let mut worst: Vec<(&str, f64)> = Vec::new();
    for r in &res {
        if args.verbose {
            println!(
                "{:<11} A={} {:<18} target {:>10.3} fitted {:>10.3} ({:+.1}%)",
                r.model,
                r.adc_bits,
                r.quantity,
                r.target,
                r.fitted,
                100.0 * r.relative()
            );
        }
        match worst.iter_mut().find(|(q, _)| *q == r.quantity) {
            Some(w) => w.1 = w.1.max(r.relative().abs()),
            None => worst.push((r.quantity, r.relative().abs())),
        }
    }
    for (q, w) in worst {
        println!("{q:<18} worst {:.1}%", 100.0 * w);
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fit-hw: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
