#![allow(dead_code)]

pub mod nets;
pub mod reference;

use std::path::PathBuf;

use xbarsim::dataset::{load_dataset, Dataset};
use xbarsim::ir::{load_model, NetworkDescriptor};

pub const PRESETS: [&str; 3] = ["tiny-alexnet", "tiny-resnet", "tiny-densenet"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn preset(name: &str) -> NetworkDescriptor {
    load_model(fixtures().join(name)).expect("checked-in bundle loads")
}

pub fn digits() -> Dataset {
    load_dataset(fixtures().join("digits")).expect("checked-in dataset loads")
}

#[derive(Debug, serde::Deserialize)]
pub struct ReferenceLayer {
    pub kind: String,
    pub fan_in: usize,
    pub out_channels: usize,
}

/// `reference.json` written next to each fixture bundle.
#[derive(Debug, serde::Deserialize)]
pub struct ReferenceFile {
    pub input_precision_bits: u32,
    pub samples: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
    pub layers: Vec<ReferenceLayer>,
    pub integer_accuracy: f64,
}

pub fn reference_file(name: &str) -> ReferenceFile {
    let text = std::fs::read_to_string(fixtures().join(name).join("reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
