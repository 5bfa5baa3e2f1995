//! On-disk model bundle: `manifest.json` plus raw weight and threshold blobs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Activation, Combine, LayerDescriptor, LayerKind, NetworkDescriptor, PackedBinaryTensor, Padding, Pool, PoolMode,
    Shape, ThresholdVector, Topology,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    name: String,
    class_count: usize,
    #[serde(default = "one")]
    final_scale: f64,
    layers: Vec<LayerEntry>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PaddingEntry {
    Same(usize),
    Split([usize; 2]),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolEntry {
    mode: String,
    window: usize,
    stride: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    kind: String,
    in_shape: Vec<usize>,
    out_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<PaddingEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pool: Option<PoolEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_pool: Option<PoolEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_precision_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inputs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thresholds: Option<String>,
}

fn parse_pool(i: usize, p: &PoolEntry) -> Result<Pool> {
    let mode = match p.mode.as_str() {
        "max" => PoolMode::Max,
        "avg" => PoolMode::Avg,
        other => return Err(Error::layer(i, format!("unsupported pool mode {other:?}"))),
    };
    Ok(Pool { mode, window: p.window, stride: p.stride })
}

fn pool_entry(p: &Pool) -> PoolEntry {
    let mode = match p.mode {
        PoolMode::Max => "max",
        PoolMode::Avg => "avg",
    };
    PoolEntry { mode: mode.into(), window: p.window, stride: p.stride }
}

fn parse_layer(i: usize, e: &LayerEntry) -> Result<LayerDescriptor> {
    let kind = match e.kind.as_str() {
        "conv" => LayerKind::Conv,
        "fc" => LayerKind::Fc,
        other => return Err(Error::layer(i, format!("unsupported layer kind {other:?}"))),
    };
    let in_shape = Shape::from_slice(&e.in_shape)
        .ok_or_else(|| Error::layer(i, format!("in_shape must have 1 or 3 dims, got {:?}", e.in_shape)))?;
    let kernel = match (kind, e.kernel) {
        (LayerKind::Conv, Some([kh, kw])) => (kh, kw),
        (LayerKind::Conv, None) => return Err(Error::layer(i, "conv layer without kernel")),
        (LayerKind::Fc, None | Some([1, 1])) => (1, 1),
        (LayerKind::Fc, Some(_)) => return Err(Error::layer(i, "fc layer with a kernel")),
    };
    let padding = match e.padding {
        None => Padding::default(),
        Some(PaddingEntry::Same(p)) => Padding::same(p),
        Some(PaddingEntry::Split([begin, end])) => Padding { begin, end },
    };
    let activation = match e.activation.as_deref() {
        None | Some("sign") => Activation::Sign,
        Some("none") => Activation::None,
        Some(other) => return Err(Error::layer(i, format!("unsupported activation {other:?}"))),
    };
    let combine = match e.combine.as_deref() {
        None | Some("concat") => Combine::Concat,
        Some("add") => Combine::Add,
        Some(other) => return Err(Error::layer(i, format!("unsupported combine mode {other:?}"))),
    };
    Ok(LayerDescriptor {
        kind,
        in_shape,
        out_channels: e.out_channels,
        kernel,
        stride: e.stride.unwrap_or(1),
        padding,
        pool: e.pool.as_ref().map(|p| parse_pool(i, p)).transpose()?,
        input_pool: e.input_pool.as_ref().map(|p| parse_pool(i, p)).transpose()?,
        activation,
        input_precision_bits: e.input_precision_bits.unwrap_or(1),
        inputs: e.inputs.clone().unwrap_or_default(),
        combine,
    })
}

fn layer_entry(i: usize, l: &LayerDescriptor, has_thresholds: bool) -> LayerEntry {
    let conv = l.kind == LayerKind::Conv;
    LayerEntry {
        kind: if conv { "conv" } else { "fc" }.into(),
        in_shape: l.in_shape.to_vec(),
        out_channels: l.out_channels,
        kernel: conv.then_some([l.kernel.0, l.kernel.1]),
        stride: conv.then_some(l.stride),
        padding: conv.then_some({
            if l.padding.begin == l.padding.end {
                PaddingEntry::Same(l.padding.begin)
            } else {
                PaddingEntry::Split([l.padding.begin, l.padding.end])
            }
        }),
        pool: l.pool.as_ref().map(pool_entry),
        input_pool: l.input_pool.as_ref().map(pool_entry),
        activation: Some(match l.activation {
            Activation::Sign => "sign".into(),
            Activation::None => "none".into(),
        }),
        input_precision_bits: Some(l.input_precision_bits),
        inputs: (!l.inputs.is_empty()).then(|| l.inputs.clone()),
        combine: (!l.inputs.is_empty()).then(|| match l.combine {
            Combine::Add => "add".into(),
            Combine::Concat => "concat".into(),
        }),
        weights: Some(format!("layer{i}.weights.bin")),
        thresholds: has_thresholds.then(|| format!("layer{i}.thresholds.bin")),
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Manifest(format!("unsupported format_version {}", m.format_version)));
    }
    if m.layers.is_empty() {
        return Err(Error::Manifest("no layers".into()));
    }
    Ok(m)
}

fn parse_topology(m: &Manifest) -> Result<Topology> {
    let layers = m.layers.iter().enumerate().map(|(i, e)| parse_layer(i, e)).collect::<Result<Vec<_>>>()?;
    Ok(Topology { name: m.name.clone(), class_count: m.class_count, layers })
}

/// Reads only the layer list of a bundle (blobs are not touched).
pub fn load_topology(dir: impl AsRef<Path>) -> Result<Topology> {
    let topo = parse_topology(&read_manifest(dir.as_ref())?)?;
    if let Some(d) = topo.validate().into_iter().next() {
        return Err(Error::layer(d.layer, d.rule.to_string()));
    }
    Ok(topo)
}

/// Loads and validates a model bundle directory.
pub fn load_model(dir: impl AsRef<Path>) -> Result<NetworkDescriptor> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let topology = parse_topology(&m)?;
    if let Some(d) = topology.validate().into_iter().next() {
        return Err(Error::layer(d.layer, d.rule.to_string()));
    }
    let mut weights = Vec::with_capacity(m.layers.len());
    let mut thresholds = Vec::with_capacity(m.layers.len());
    for (i, (e, l)) in m.layers.iter().zip(&topology.layers).enumerate() {
        let wname = e.weights.as_deref().ok_or_else(|| Error::layer(i, "no weights blob named"))?;
        let path = dir.join(wname);
        let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
        let dims = vec![l.fan_in(), l.out_channels];
        let w = PackedBinaryTensor::from_bytes(dims, bytes).map_err(|err| match err {
            Error::LengthMismatch { expected, actual } => {
                Error::layer(i, format!("blob length mismatch: {wname} has {actual} bytes, expected {expected}"))
            }
            other => other,
        })?;
        weights.push(w);
        let t = match &e.thresholds {
            None => None,
            Some(tname) => {
                let path = dir.join(tname);
                let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
                if bytes.len() != l.out_channels * 8 {
                    return Err(Error::layer(
                        i,
                        format!(
                            "blob length mismatch: {tname} has {} bytes, expected {}",
                            bytes.len(),
                            l.out_channels * 8
                        ),
                    ));
                }
                let vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                Some(ThresholdVector::new(vals))
            }
        };
        thresholds.push(t);
    }
    let net = NetworkDescriptor { topology, weights, thresholds, final_scale: m.final_scale };
    if let Some(d) = super::validate_chain(&net).into_iter().next() {
        return Err(Error::layer(d.layer, d.rule.to_string()));
    }
    Ok(net)
}

/// Writes `net` as a bundle into `dir` (created if missing).
pub fn save_model(net: &NetworkDescriptor, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::new();
    for (i, l) in net.layers().iter().enumerate() {
        let entry = layer_entry(i, l, net.thresholds[i].is_some());
        let wpath = dir.join(entry.weights.as_deref().unwrap());
        fs::write(&wpath, net.weights[i].as_bytes()).map_err(|e| Error::io(&wpath, e))?;
        if let (Some(tname), Some(t)) = (&entry.thresholds, &net.thresholds[i]) {
            let bytes: Vec<u8> = t.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
            let tpath = dir.join(tname);
            fs::write(&tpath, bytes).map_err(|e| Error::io(&tpath, e))?;
        }
        layers.push(entry);
    }
    let m = Manifest {
        format_version: FORMAT_VERSION,
        name: net.topology.name.clone(),
        class_count: net.topology.class_count,
        final_scale: net.final_scale,
        layers,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&m).map_err(|e| Error::Manifest(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
