//! Sweep harness around [`xbarsim`]: accuracy grids over input precision
//! and ADC resolution, hardware sweeps, plot series and report files.

pub mod error;
pub mod fit;
pub mod outputs;
pub mod plots;
pub mod report;
pub mod run;
pub mod sweep;
pub mod targets;

pub use error::{Error, Result};
