//! End-to-end inference on the crossbar model.
//!
//! Convolutions are lowered to patch x weight products; every patch row is
//! driven onto the tiles one input plane at a time, each column partial sum
//! goes through that tile's converter, and the planes are recombined by
//! shift-add. Pooling, thresholding and skip combination happen digitally.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Activation, Combine, LayerDescriptor, LayerKind, NetworkDescriptor, Pool, PoolMode, Shape};
use crate::quant::{max_abs, plane_bit, quantize_with_scale, Precision};
use crate::xbar::{map_weights, AdcSpec, ClipPolicy, Drive, DriveMode, Geometry, Histogram, SubarrayTile};

/// Integer activation tensor (HWC for spatial shapes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor {
    pub shape: Shape,
    pub data: Vec<i32>,
}

impl IntTensor {
    pub fn new(shape: Shape, data: Vec<i32>) -> Result<Self> {
        if shape.len() != data.len() {
            return Err(Error::LengthMismatch { expected: shape.len(), actual: data.len() });
        }
        Ok(IntTensor { shape, data })
    }
}

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut data = vec![0i64; self.rows * other.cols];
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0 {
                    continue;
                }
                let brow = other.row(k);
                for (o, &b) in data[r * other.cols..(r + 1) * other.cols].iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        IntMatrix { rows: self.rows, cols: other.cols, data }
    }
}

/// Whether the dynamic input range is taken per image or per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QuantGranularity {
    #[default]
    PerSample,
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionConfig {
    /// First-layer input precision `B`.
    pub input_bits: Precision,
    /// Converter resolution `A` (ignored in exact mode).
    pub adc_bits: u32,
    pub geometry: Geometry,
    pub clip: ClipPolicy,
    /// Use lossless converters everywhere.
    pub exact: bool,
    pub granularity: QuantGranularity,
}

impl ExecutionConfig {
    pub fn new(input_bits: u32, adc_bits: u32) -> Result<Self> {
        Ok(ExecutionConfig {
            input_bits: Precision::new(input_bits)?,
            adc_bits,
            geometry: Geometry::default(),
            clip: ClipPolicy::FullRange,
            exact: false,
            granularity: QuantGranularity::PerSample,
        })
    }

    /// Lossless converters; output equals plain integer inference.
    pub fn exact(input_bits: u32) -> Result<Self> {
        Ok(ExecutionConfig { exact: true, ..ExecutionConfig::new(input_bits, 8)? })
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_clip(mut self, clip: ClipPolicy) -> Self {
        self.clip = clip;
        self
    }
}

/// Per-layer execution counts for one image (checksum covers the batch).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub tiles: usize,
    pub bit_planes: u32,
    pub adc_conversions: u64,
    pub macs: u64,
    /// FNV-1a over the pooled pre-activations.
    pub checksum: u64,
}

/// Result of one layer on one image.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOutput {
    Binary(IntTensor),
    Logits(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub logits: Vec<Vec<f64>>,
    pub traces: Vec<LayerTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlaneCode {
    /// Two's-complement {0,1} planes, bitplane drive.
    TwosComplement(Precision),
    /// Signed-magnitude {-1,0,+1} planes, xnor drive.
    SignMagnitude(u32),
}

impl PlaneCode {
    fn planes(self) -> u32 {
        match self {
            PlaneCode::TwosComplement(p) => p.bits(),
            PlaneCode::SignMagnitude(n) => n,
        }
    }

    fn weight(self, b: u32) -> i64 {
        match self {
            PlaneCode::TwosComplement(p) => p.plane_weight(b),
            PlaneCode::SignMagnitude(_) => 1 << b,
        }
    }

    #[inline]
    fn value(self, v: i32, b: u32) -> i64 {
        match self {
            PlaneCode::TwosComplement(_) => plane_bit(v, b) as i64,
            PlaneCode::SignMagnitude(_) => v.signum() as i64 * ((v.unsigned_abs() >> b) & 1) as i64,
        }
    }

    fn mode(self) -> DriveMode {
        match self {
            PlaneCode::TwosComplement(_) => DriveMode::Bitplane,
            PlaneCode::SignMagnitude(_) => DriveMode::Xnor,
        }
    }
}

#[derive(Debug, Clone)]
struct MappedLayer {
    tiles: Vec<SubarrayTile>,
    row_tiles: usize,
    col_tiles: usize,
    adc: Vec<AdcSpec>,
    /// `lut[t][s + rows_used]` = converter output for column sum `s` on tile `t`.
    lut: Vec<Vec<i64>>,
    code: PlaneCode,
}

/// Largest |value| a layer's merged input can take.
fn input_bound(net: &NetworkDescriptor, i: usize) -> u32 {
    let l = &net.layers()[i];
    let srcs = net.topology.sources(i);
    let merged = if l.combine == Combine::Add { srcs.len().max(1) } else { 1 };
    let area = l.input_pool.map_or(1, |p| p.area());
    (merged * area) as u32
}

fn build_lut(tile: &SubarrayTile, spec: &AdcSpec) -> Vec<i64> {
    let r = tile.rows_used as i64;
    (-r..=r).map(|s| crate::xbar::adc_quantize(s, spec)).collect()
}

/// A network with its weights programmed onto subarrays for one
/// [`ExecutionConfig`].
#[derive(Debug, Clone)]
pub struct Simulator<'n> {
    net: &'n NetworkDescriptor,
    cfg: ExecutionConfig,
    layers: Vec<MappedLayer>,
}

impl<'n> Simulator<'n> {
    /// Maps the network and sizes converters from tile row counts.
    ///
    /// Percentile clipping needs observed partial sums; use
    /// [`Simulator::calibrate`] for it.
    pub fn new(net: &'n NetworkDescriptor, cfg: ExecutionConfig) -> Result<Self> {
        if !cfg.exact {
            if let ClipPolicy::Percentile(_) = cfg.clip {
                return Err(Error::Config("percentile clipping needs a calibration batch".into()));
            }
            AdcSpec::new(cfg.adc_bits, 0, 0)?;
        }
        let mut layers = Vec::with_capacity(net.layers().len());
        for (i, l) in net.layers().iter().enumerate() {
            let tiles = map_weights(&net.weights[i], cfg.geometry)?;
            let (row_tiles, col_tiles) = cfg.geometry.tiles_for(l.fan_in(), l.out_channels);
            let adc = tiles
                .iter()
                .map(|t| {
                    let r = t.rows_used as i64;
                    if cfg.exact {
                        AdcSpec::lossless(-r, r)
                    } else {
                        AdcSpec::new(cfg.adc_bits, -r, r)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let lut = tiles.iter().zip(&adc).map(|(t, s)| build_lut(t, s)).collect();
            let code = if i == 0 {
                PlaneCode::TwosComplement(cfg.input_bits)
            } else {
                PlaneCode::SignMagnitude(32 - input_bound(net, i).leading_zeros())
            };
            layers.push(MappedLayer { tiles, row_tiles, col_tiles, adc, lut, code });
        }
        Ok(Simulator { net, cfg, layers })
    }

    /// Builds a simulator whose converter clip ranges come from the exact
    /// partial sums observed on `batch` (one clip per layer).
    pub fn calibrate(net: &'n NetworkDescriptor, cfg: ExecutionConfig, batch: &[&[f32]]) -> Result<Self> {
        let p = match cfg.clip {
            ClipPolicy::Percentile(p) if !cfg.exact => p,
            _ => return Simulator::new(net, cfg),
        };
        if batch.is_empty() {
            return Err(Error::Empty("calibration batch"));
        }
        let probe = Simulator::new(net, ExecutionConfig { exact: true, clip: ClipPolicy::FullRange, ..cfg })?;
        let scale = probe.batch_scale(batch);
        let hists = batch
            .par_iter()
            .map(|x| {
                let mut h = vec![Histogram::new(); net.layers().len()];
                probe.run(x, scale, Some(&mut h)).map(|_| h)
            })
            .try_reduce(
                || vec![Histogram::new(); net.layers().len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.merge(y);
                    }
                    Ok(a)
                },
            )?;
        let mut sim = probe;
        sim.cfg = cfg;
        for (layer, hist) in sim.layers.iter_mut().zip(&hists) {
            let (lo, hi) = hist.symmetric_clip(p).ok_or(Error::Empty("calibration samples"))?;
            let spec = AdcSpec::new(cfg.adc_bits, lo, hi)?;
            layer.adc = vec![spec; layer.tiles.len()];
            layer.lut = layer.tiles.iter().map(|t| build_lut(t, &spec)).collect();
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.cfg
    }

    pub fn network(&self) -> &NetworkDescriptor {
        self.net
    }

    /// Converter specs of layer `i`, one per tile.
    pub fn adc_specs(&self, i: usize) -> &[AdcSpec] {
        &self.layers[i].adc
    }

    fn batch_scale(&self, batch: &[&[f32]]) -> Option<f64> {
        match self.cfg.granularity {
            QuantGranularity::PerSample => None,
            QuantGranularity::PerBatch => {
                let m = batch.iter().map(|x| max_abs(x)).fold(0.0, f64::max);
                Some(self.cfg.input_bits.scale_for(m))
            }
        }
    }

    /// Quantizes a real input image for the first layer.
    pub fn quantize_input(&self, x: &[f32], scale: Option<f64>) -> Result<(IntTensor, f64)> {
        let shape = self.net.input_shape().ok_or(Error::Empty("network"))?;
        let b = self.cfg.input_bits;
        let scale = scale.unwrap_or_else(|| b.scale_for(max_abs(x)));
        let q = quantize_with_scale(x, shape.to_vec(), b, scale)?;
        Ok((IntTensor { shape, data: q.values }, q.scale))
    }

    /// Runs layer `i` on its already merged (and input-pooled) input.
    ///
    /// `input_scale` is the real value of one input unit: the quantization
    /// scale for layer 0 and 1 afterwards.
    pub fn forward_layer(&self, i: usize, input: &IntTensor, input_scale: f64) -> Result<(LayerOutput, LayerTrace)> {
        let l = &self.net.layers()[i];
        if input.shape != l.in_shape && !(l.kind == LayerKind::Fc && input.shape.len() == l.in_shape.len()) {
            return Err(Error::layer(i, format!("input shape {} does not match {}", input.shape, l.in_shape)));
        }
        let pre = self.preactivation(i, input, None);
        let checksum = pre.iter().fold(FNV_OFFSET, |h, v| fnv1a(h, &v.to_le_bytes()));
        let out = self.activate(i, &pre, input_scale);
        Ok((out, self.trace(i, checksum)))
    }

    fn trace(&self, i: usize, checksum: u64) -> LayerTrace {
        let l = &self.net.layers()[i];
        let m = &self.layers[i];
        let planes = m.code.planes();
        // every row tile converts each of the layer's output columns
        let cols = m.row_tiles * l.out_channels;
        LayerTrace {
            layer: i,
            tiles: m.tiles.len(),
            bit_planes: planes,
            adc_conversions: (l.positions() * cols) as u64 * planes as u64,
            macs: (l.positions() * l.fan_in() * l.out_channels) as u64,
            checksum,
        }
    }

    /// Pooled integer pre-activations (positions x out_channels).
    fn preactivation(&self, i: usize, input: &IntTensor, hist: Option<&mut Histogram>) -> Vec<i64> {
        let l = &self.net.layers()[i];
        let m = &self.layers[i];
        let (patches, positions, k) = im2col(l, input);
        let n = l.out_channels;
        let rows = self.cfg.geometry.rows;
        let mut acc = vec![0i64; positions * n];
        let mut drive = Drive::empty(m.code.mode(), 0);
        let mut sums = vec![0i64; self.cfg.geometry.cols];
        let mut hist = hist;
        for p in 0..positions {
            let patch = &patches[p * k..(p + 1) * k];
            let out = &mut acc[p * n..(p + 1) * n];
            for b in 0..m.code.planes() {
                let w = m.code.weight(b);
                for tr in 0..m.row_tiles {
                    let r0 = tr * rows;
                    let used = rows.min(k - r0);
                    drive.reset(m.code.mode(), used);
                    for (r, &v) in patch[r0..r0 + used].iter().enumerate() {
                        drive.set(r, m.code.value(v, b));
                    }
                    for tc in 0..m.col_tiles {
                        let t = tr * m.col_tiles + tc;
                        let tile = &m.tiles[t];
                        let lut = &m.lut[t];
                        let off = tile.rows_used as i64;
                        tile.column_sums_into(&drive, &mut sums);
                        let c0 = tile.origin.1;
                        for (c, &s) in sums[..tile.cols_used].iter().enumerate() {
                            if let Some(h) = hist.as_deref_mut() {
                                h.add(s);
                            }
                            out[c0 + c] += w * lut[(s + off) as usize];
                        }
                    }
                }
            }
        }
        match (l.kind, l.pool) {
            (LayerKind::Conv, Some(pool)) => {
                let (oh, ow) = l.conv_out_hw().expect("validated shape");
                pool_i64(&acc, oh, ow, n, pool)
            }
            _ => acc,
        }
    }

    fn activate(&self, i: usize, pre: &[i64], scale: f64) -> LayerOutput {
        let l = &self.net.layers()[i];
        let m = l.pool_divisor() as f64;
        match l.activation {
            Activation::Sign => {
                let tau = self.net.thresholds[i].as_ref().expect("validated thresholds").as_slice();
                let c = l.out_channels;
                let data = pre
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| if (v as f64) * scale >= tau[j % c] * m { 1 } else { -1 })
                    .collect();
                let shape = l.out_shape().expect("validated shape");
                LayerOutput::Binary(IntTensor { shape, data })
            }
            Activation::None => {
                let fs = self.net.final_scale;
                LayerOutput::Logits(pre.iter().map(|&v| (v as f64) * scale / m * fs).collect())
            }
        }
    }

    /// Merges the sources of layer `i` and applies its input pooling.
    fn layer_input(&self, i: usize, outputs: &[IntTensor]) -> IntTensor {
        let l = &self.net.layers()[i];
        let srcs: Vec<&IntTensor> = self.net.topology.sources(i).iter().map(|&s| &outputs[s]).collect();
        let merged = merge(&srcs, l.combine);
        match l.input_pool {
            Some(pool) => {
                let Shape::Spatial { h, w, c } = merged.shape else { unreachable!("validated input pool") };
                let wide: Vec<i64> = merged.data.iter().map(|&v| v as i64).collect();
                let pooled = pool_i64(&wide, h, w, c, pool);
                let shape = pool.apply(merged.shape).expect("validated input pool");
                IntTensor { shape, data: pooled.into_iter().map(|v| v as i32).collect() }
            }
            None => merged,
        }
    }

    fn run(
        &self,
        x: &[f32],
        scale: Option<f64>,
        mut hist: Option<&mut Vec<Histogram>>,
    ) -> Result<(Vec<f64>, Vec<u64>)> {
        let n = self.net.layers().len();
        let mut outputs: Vec<IntTensor> = Vec::with_capacity(n);
        let mut sums = Vec::with_capacity(n);
        for i in 0..n {
            let (input, in_scale) =
                if i == 0 { self.quantize_input(x, scale)? } else { (self.layer_input(i, &outputs), 1.0) };
            let h = hist.as_deref_mut().map(|h| &mut h[i]);
            let pre = self.preactivation(i, &input, h);
            sums.push(pre.iter().fold(FNV_OFFSET, |h, v| fnv1a(h, &v.to_le_bytes())));
            match self.activate(i, &pre, in_scale) {
                LayerOutput::Binary(t) => outputs.push(t),
                LayerOutput::Logits(v) => return Ok((v, sums)),
            }
        }
        Err(Error::Invalid("network has no logit layer".into()))
    }

    /// Runs every image of `batch` (in parallel) and returns logits in
    /// batch order plus per-layer traces.
    pub fn forward_network(&self, batch: &[&[f32]]) -> Result<NetworkOutput> {
        let scale = self.batch_scale(batch);
        let results = batch.par_iter().map(|x| self.run(x, scale, None)).collect::<Result<Vec<_>>>()?;
        let n = self.net.layers().len();
        let traces = (0..n)
            .map(|i| {
                let checksum = results.iter().fold(FNV_OFFSET, |h, (_, s)| fnv1a(h, &s[i].to_le_bytes()));
                self.trace(i, checksum)
            })
            .collect();
        Ok(NetworkOutput { logits: results.into_iter().map(|(l, _)| l).collect(), traces })
    }

    /// Top-1 accuracy over `indices` of `data` (all samples when `None`).
    pub fn evaluate_accuracy(&self, data: &Dataset, indices: Option<&[usize]>) -> Result<Accuracy> {
        let all: Vec<usize>;
        let idx = match indices {
            Some(i) => i,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        if idx.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let batch: Vec<&[f32]> = idx.iter().map(|&i| data.sample(i)).collect();
        let scale = self.batch_scale(&batch);
        let correct = idx
            .par_iter()
            .zip(batch.par_iter())
            .map(|(&i, x)| {
                let (logits, _) = self.run(x, scale, None)?;
                Ok(usize::from(argmax(&logits) == data.label(i)))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum();
        Ok(Accuracy { correct, total: idx.len() })
    }
}

fn merge(srcs: &[&IntTensor], combine: Combine) -> IntTensor {
    if srcs.len() == 1 {
        return srcs[0].clone();
    }
    match combine {
        Combine::Add => {
            let mut data = srcs[0].data.clone();
            for s in &srcs[1..] {
                for (d, v) in data.iter_mut().zip(&s.data) {
                    *d += v;
                }
            }
            IntTensor { shape: srcs[0].shape, data }
        }
        Combine::Concat => match srcs[0].shape {
            Shape::Flat(_) => {
                let data: Vec<i32> = srcs.iter().flat_map(|s| s.data.iter().copied()).collect();
                IntTensor { shape: Shape::Flat(data.len()), data }
            }
            Shape::Spatial { h, w, .. } => {
                let c: usize = srcs.iter().map(|s| s.shape.channels()).sum();
                let mut data = Vec::with_capacity(h * w * c);
                for p in 0..h * w {
                    for s in srcs {
                        let sc = s.shape.channels();
                        data.extend_from_slice(&s.data[p * sc..(p + 1) * sc]);
                    }
                }
                IntTensor { shape: Shape::spatial(h, w, c), data }
            }
        },
    }
}

/// Max pooling or window sums (for average pooling) over an HWC grid.
fn pool_i64(x: &[i64], h: usize, w: usize, c: usize, pool: Pool) -> Vec<i64> {
    let oh = pool.out_dim(h).expect("validated pool");
    let ow = pool.out_dim(w).expect("validated pool");
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for xo in 0..ow {
            for ch in 0..c {
                let mut acc = match pool.mode {
                    PoolMode::Max => i64::MIN,
                    PoolMode::Avg => 0,
                };
                for dy in 0..pool.window {
                    for dx in 0..pool.window {
                        let v = x[((y * pool.stride + dy) * w + xo * pool.stride + dx) * c + ch];
                        acc = match pool.mode {
                            PoolMode::Max => acc.max(v),
                            PoolMode::Avg => acc + v,
                        };
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Patch rows of a layer: `(data, positions, fan_in)`, zero padded.
fn im2col(l: &LayerDescriptor, input: &IntTensor) -> (Vec<i32>, usize, usize) {
    match (l.kind, input.shape) {
        (LayerKind::Fc, _) | (LayerKind::Conv, Shape::Flat(_)) => (input.data.clone(), 1, input.data.len()),
        (LayerKind::Conv, Shape::Spatial { h, w, c }) => {
            let (kh, kw) = l.kernel;
            let (oh, ow) = l.conv_out_hw().expect("validated shape");
            let k = kh * kw * c;
            let pb = l.padding.begin as isize;
            let mut out = vec![0i32; oh * ow * k];
            for y in 0..oh {
                for x in 0..ow {
                    let row = &mut out[(y * ow + x) * k..(y * ow + x + 1) * k];
                    for dy in 0..kh {
                        let iy = (y * l.stride + dy) as isize - pb;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let ix = (x * l.stride + dx) as isize - pb;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = ((iy as usize) * w + ix as usize) * c;
                            let dst = (dy * kw + dx) * c;
                            row[dst..dst + c].copy_from_slice(&input.data[src..src + c]);
                        }
                    }
                }
            }
            (out, oh * ow, k)
        }
    }
}

/// Lowers a layer to `(patch matrix, weight matrix)`.
///
/// Their product equals the direct convolution (or fc product) of `input`
/// with the layer weights; padding contributes zeros.
pub fn lower_conv(net: &NetworkDescriptor, layer: usize, input: &IntTensor) -> Result<(IntMatrix, IntMatrix)> {
    let l = &net.layers()[layer];
    if input.shape.len() != l.in_shape.len() {
        return Err(Error::LengthMismatch { expected: l.in_shape.len(), actual: input.shape.len() });
    }
    let (p, positions, k) = im2col(l, input);
    let patches = IntMatrix { rows: positions, cols: k, data: p.into_iter().map(i64::from).collect() };
    let w = &net.weights[layer];
    let weights = IntMatrix { rows: k, cols: l.out_channels, data: w.to_signs().into_iter().map(i64::from).collect() };
    Ok((patches, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{PackedBinaryTensor, ThresholdVector, Topology};

    fn single_fc(k: usize, n: usize, signs: Option<Vec<i8>>) -> NetworkDescriptor {
        let w = match signs {
            Some(s) => PackedBinaryTensor::from_signs(vec![k, n], &s).unwrap(),
            None => PackedBinaryTensor::filled(vec![k, n], true),
        };
        NetworkDescriptor {
            topology: Topology { name: "fc".into(), class_count: n, layers: vec![LayerDescriptor::fc(k, n).logits()] },
            weights: vec![w],
            thresholds: vec![None],
            final_scale: 1.0,
        }
    }

    #[test]
    fn uniform_weights_sum_the_input() {
        let net = single_fc(6, 3, None);
        let sim = Simulator::new(&net, ExecutionConfig::exact(8).unwrap()).unwrap();
        let input = IntTensor::new(Shape::Flat(6), vec![1, -1, 1, 1, -1, 1]).unwrap();
        let (out, trace) = sim.forward_layer(0, &input, 1.0).unwrap();
        assert_eq!(out, LayerOutput::Logits(vec![2.0; 3]));
        assert_eq!(trace.tiles, 1);
        assert_eq!(trace.macs, 18);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn identity_lowering_for_pointwise_conv() {
        let l = LayerDescriptor::conv((2, 2, 3), 4, 1);
        let input = IntTensor::new(Shape::spatial(2, 2, 3), (0..12).collect()).unwrap();
        let (p, positions, k) = im2col(&l, &input);
        assert_eq!((positions, k), (4, 3));
        assert_eq!(p, input.data);
    }

    #[test]
    fn concat_interleaves_channels() {
        let a = IntTensor::new(Shape::spatial(1, 2, 1), vec![1, 2]).unwrap();
        let b = IntTensor::new(Shape::spatial(1, 2, 2), vec![3, 4, 5, 6]).unwrap();
        let m = merge(&[&a, &b], Combine::Concat);
        assert_eq!(m.data, vec![1, 3, 4, 2, 5, 6]);
        let s = merge(&[&a, &a], Combine::Add);
        assert_eq!(s.data, vec![2, 4]);
    }

    #[test]
    fn pooling_max_and_sum() {
        let x: Vec<i64> = vec![1, 5, 3, 2];
        assert_eq!(pool_i64(&x, 2, 2, 1, Pool::max(2, 2)), vec![5]);
        assert_eq!(pool_i64(&x, 2, 2, 1, Pool::avg(2, 2)), vec![11]);
    }

    #[test]
    fn percentile_needs_calibration() {
        let net = single_fc(4, 2, None);
        let cfg = ExecutionConfig::new(8, 4).unwrap().with_clip(ClipPolicy::Percentile(99.9));
        assert!(Simulator::new(&net, cfg).is_err());
        let x = [0.5f32, -0.25, 1.0, 0.0];
        let sim = Simulator::calibrate(&net, cfg, &[&x]).unwrap();
        assert!(sim.adc_specs(0)[0].clip_hi <= 4);
    }

    #[test]
    fn sign_layer_compares_against_scaled_threshold() {
        let mut net = single_fc(2, 2, Some(vec![1, 1, 1, -1]));
        net.topology.layers = vec![LayerDescriptor::fc(2, 2), LayerDescriptor::fc(2, 2).logits()];
        net.topology.class_count = 2;
        net.weights.push(PackedBinaryTensor::filled(vec![2, 2], true));
        net.thresholds = vec![Some(ThresholdVector::new(vec![2.0, 0.0])), None];
        // first layer: two's-complement planes, so 1 needs B >= 2
        let sim = Simulator::new(&net, ExecutionConfig::exact(2).unwrap()).unwrap();
        let input = IntTensor::new(Shape::Flat(2), vec![1, 1]).unwrap();
        let (out, _) = sim.forward_layer(0, &input, 1.0).unwrap();
        // sums (2, 0) against (2, 0): both at the threshold
        assert_eq!(out, LayerOutput::Binary(IntTensor::new(Shape::Flat(2), vec![1, 1]).unwrap()));
    }
}
