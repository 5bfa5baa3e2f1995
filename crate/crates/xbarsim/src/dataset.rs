//! Labeled image set: `data.bin` (f32 LE, sample-major), `labels.bin`
//! (i32 LE) and `shape.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::Shape;

#[derive(Debug, Serialize, Deserialize)]
struct ShapeFile {
    num_samples: usize,
    sample_shape: Vec<usize>,
    #[serde(default)]
    class_count: Option<usize>,
    #[serde(default)]
    layout: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_shape: Shape,
    pub class_count: usize,
    data: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(sample_shape: Shape, class_count: usize, data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        let per = sample_shape.len();
        if per == 0 || data.len() != per * labels.len() {
            return Err(Error::Dataset(format!(
                "{} values for {} samples of shape {sample_shape}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Dataset(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Dataset { sample_shape, class_count, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_shape.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a dataset directory. Without `class_count` in `shape.json` the
/// largest label + 1 is used.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let spath = dir.join("shape.json");
    let text = fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
    let meta: ShapeFile = serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("shape.json: {e}")))?;
    if let Some(layout) = meta.layout.as_deref() {
        if layout != "HWC" {
            return Err(Error::Dataset(format!("unsupported layout {layout:?}")));
        }
    }
    let shape = Shape::from_slice(&meta.sample_shape)
        .ok_or_else(|| Error::Dataset(format!("sample_shape {:?}", meta.sample_shape)))?;
    let raw = read(&dir.join("data.bin"))?;
    let expected = meta.num_samples * shape.len() * 4;
    if raw.len() != expected {
        return Err(Error::Dataset(format!("data.bin has {} bytes, expected {expected}", raw.len())));
    }
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let raw = read(&dir.join("labels.bin"))?;
    if raw.len() != meta.num_samples * 4 {
        return Err(Error::Dataset(format!("labels.bin has {} bytes, expected {}", raw.len(), meta.num_samples * 4)));
    }
    let labels = raw
        .chunks_exact(4)
        .map(|c| {
            let v = i32::from_le_bytes(c.try_into().unwrap());
            usize::try_from(v).map_err(|_| Error::Dataset(format!("negative label {v}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = meta.class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(shape, classes, data, labels)
}

/// Writes `data` in the directory format read by [`load_dataset`].
pub fn save_dataset(data: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes: Vec<u8> = data.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let p = dir.join("data.bin");
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    let bytes: Vec<u8> = data.labels.iter().flat_map(|&v| (v as i32).to_le_bytes()).collect();
    let p = dir.join("labels.bin");
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    let meta = ShapeFile {
        num_samples: data.len(),
        sample_shape: data.sample_shape.to_vec(),
        class_count: Some(data.class_count),
        layout: Some("HWC".into()),
    };
    let p = dir.join("shape.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Dataset(e.to_string()))?;
    fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
}
