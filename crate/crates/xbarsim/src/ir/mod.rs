//! Network representation: layer descriptors, packed weights, thresholds,
//! and shape-chain validation.

mod bundle;
mod packed;

use std::fmt;

pub use bundle::{load_model, load_topology, save_model, MANIFEST_FILE};
pub use packed::PackedBinaryTensor;

use crate::error::{Error, Result};

/// Largest first-layer input precision accepted by the IR.
pub const MAX_INPUT_BITS: u32 = 32;

/// Activation tensor shape. Spatial tensors are stored HWC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn spatial(h: usize, w: usize, c: usize) -> Self {
        Shape::Spatial { h, w, c }
    }

    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel count; a flat tensor counts as one position of `n` channels.
    pub fn channels(&self) -> usize {
        match *self {
            Shape::Spatial { c, .. } => c,
            Shape::Flat(n) => n,
        }
    }

    pub fn positions(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, .. } => h * w,
            Shape::Flat(_) => 1,
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        match *self {
            Shape::Spatial { h, w, c } => vec![h, w, c],
            Shape::Flat(n) => vec![n],
        }
    }

    pub fn from_slice(dims: &[usize]) -> Option<Self> {
        match *dims {
            [h, w, c] => Some(Shape::Spatial { h, w, c }),
            [n] => Some(Shape::Flat(n)),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Spatial { h, w, c } => write!(f, "{h}x{w}x{c}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub mode: PoolMode,
    pub window: usize,
    pub stride: usize,
}

impl Pool {
    pub fn max(window: usize, stride: usize) -> Self {
        Pool { mode: PoolMode::Max, window, stride }
    }

    pub fn avg(window: usize, stride: usize) -> Self {
        Pool { mode: PoolMode::Avg, window, stride }
    }

    /// Number of values summed per output for average pooling; 1 for max.
    pub fn area(&self) -> usize {
        match self.mode {
            PoolMode::Max => 1,
            PoolMode::Avg => self.window * self.window,
        }
    }

    /// Pooled extent of one spatial dimension, if it is integral.
    pub fn out_dim(&self, n: usize) -> Option<usize> {
        if self.window == 0 || self.stride == 0 || self.window > n {
            return None;
        }
        let span = n - self.window;
        span.is_multiple_of(self.stride).then(|| span / self.stride + 1)
    }

    pub fn apply(&self, shape: Shape) -> Option<Shape> {
        match shape {
            Shape::Spatial { h, w, c } => Some(Shape::Spatial { h: self.out_dim(h)?, w: self.out_dim(w)?, c }),
            Shape::Flat(_) => None,
        }
    }
}

/// Zero padding added before and after each spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub begin: usize,
    pub end: usize,
}

impl Padding {
    pub fn same(p: usize) -> Self {
        Padding { begin: p, end: p }
    }

    pub fn total(&self) -> usize {
        self.begin + self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sign,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    Add,
    #[default]
    Concat,
}

/// One conv or fc layer.
///
/// `inputs` lists earlier layers whose outputs are merged (by `combine`) to
/// form this layer's input; empty means "the previous layer". `input_pool`
/// pools that merged input before the layer sees it. `in_shape` is the
/// shape after both steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDescriptor {
    pub kind: LayerKind,
    pub in_shape: Shape,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: Padding,
    pub pool: Option<Pool>,
    pub input_pool: Option<Pool>,
    pub activation: Activation,
    pub input_precision_bits: u32,
    pub inputs: Vec<usize>,
    pub combine: Combine,
}

impl LayerDescriptor {
    /// Square `k`x`k` convolution, stride 1, no padding, sign activation.
    pub fn conv(in_shape: (usize, usize, usize), out_channels: usize, k: usize) -> Self {
        let (h, w, c) = in_shape;
        LayerDescriptor {
            kind: LayerKind::Conv,
            in_shape: Shape::spatial(h, w, c),
            out_channels,
            kernel: (k, k),
            stride: 1,
            padding: Padding::default(),
            pool: None,
            input_pool: None,
            activation: Activation::Sign,
            input_precision_bits: 1,
            inputs: Vec::new(),
            combine: Combine::Concat,
        }
    }

    pub fn fc(features: usize, out_channels: usize) -> Self {
        LayerDescriptor {
            kind: LayerKind::Fc,
            in_shape: Shape::Flat(features),
            out_channels,
            kernel: (1, 1),
            stride: 1,
            padding: Padding::default(),
            pool: None,
            input_pool: None,
            activation: Activation::Sign,
            input_precision_bits: 1,
            inputs: Vec::new(),
            combine: Combine::Concat,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, begin: usize, end: usize) -> Self {
        self.padding = Padding { begin, end };
        self
    }

    pub fn with_pool(mut self, pool: Pool) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn with_input_pool(mut self, pool: Pool) -> Self {
        self.input_pool = Some(pool);
        self
    }

    pub fn with_input_bits(mut self, bits: u32) -> Self {
        self.input_precision_bits = bits;
        self
    }

    pub fn from_layers(mut self, inputs: &[usize], combine: Combine) -> Self {
        self.inputs = inputs.to_vec();
        self.combine = combine;
        self
    }

    /// Marks the layer as the logit layer (no sign activation).
    pub fn logits(mut self) -> Self {
        self.activation = Activation::None;
        self
    }

    /// Rows of the lowered weight matrix.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.kernel.0 * self.kernel.1 * self.in_shape.channels(),
            LayerKind::Fc => self.in_shape.len(),
        }
    }

    /// Convolution output extent before pooling, if integral and positive.
    pub fn conv_out_hw(&self) -> Option<(usize, usize)> {
        let Shape::Spatial { h, w, .. } = self.in_shape else {
            return None;
        };
        let dim = |n: usize, k: usize| {
            let padded = n + self.padding.total();
            if self.stride == 0 || k == 0 || k > padded || !(padded - k).is_multiple_of(self.stride) {
                None
            } else {
                Some((padded - k) / self.stride + 1)
            }
        };
        Some((dim(h, self.kernel.0)?, dim(w, self.kernel.1)?))
    }

    /// Output positions evaluated on the array (before pooling).
    pub fn positions(&self) -> usize {
        match self.kind {
            LayerKind::Fc => 1,
            LayerKind::Conv => self.conv_out_hw().map_or(0, |(h, w)| h * w),
        }
    }

    /// Shape of the layer output after pooling.
    pub fn out_shape(&self) -> Option<Shape> {
        let pre = match self.kind {
            LayerKind::Fc => Shape::Flat(self.out_channels),
            LayerKind::Conv => {
                let (h, w) = self.conv_out_hw()?;
                Shape::spatial(h, w, self.out_channels)
            }
        };
        match self.pool {
            Some(p) => p.apply(pre),
            None => Some(pre),
        }
    }

    /// Divisor applied to pre-activations: output-pool area times
    /// input-pool area (both 1 unless average pooling is used).
    pub fn pool_divisor(&self) -> usize {
        self.pool.map_or(1, |p| p.area()) * self.input_pool.map_or(1, |p| p.area())
    }
}

/// Per-output-channel sign thresholds (folded batch-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn new(values: Vec<f64>) -> Self {
        ThresholdVector(values)
    }

    pub fn zeros(n: usize) -> Self {
        ThresholdVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Layer list without weights; enough for shape checks and cost modeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub name: String,
    pub class_count: usize,
    pub layers: Vec<LayerDescriptor>,
}

impl Topology {
    /// Effective source layers of layer `i`.
    pub fn sources(&self, i: usize) -> Vec<usize> {
        let l = &self.layers[i];
        if !l.inputs.is_empty() {
            l.inputs.clone()
        } else if i == 0 {
            Vec::new()
        } else {
            vec![i - 1]
        }
    }

    /// Shape of the merged sources of layer `i` before any input pooling.
    /// `None` for layer 0 (it reads the network input).
    pub fn combined_shape(&self, i: usize) -> std::result::Result<Option<Shape>, Rule> {
        let srcs = self.sources(i);
        if srcs.is_empty() {
            return Ok(None);
        }
        let mut shapes = Vec::with_capacity(srcs.len());
        for &s in &srcs {
            if s >= i {
                return Err(Rule::BadSource { source: s });
            }
            match self.layers[s].out_shape() {
                Some(sh) => shapes.push(sh),
                None => return Err(Rule::Unresolved { source: s }),
            }
        }
        combine_shapes(&shapes, self.layers[i].combine).map(Some)
    }

    /// Shape and threshold-independent structural diagnostics.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let mut push = |rule| out.push(Diagnostic { layer: i, rule });
            if l.out_channels == 0 || l.in_shape.is_empty() {
                push(Rule::ZeroSize);
                continue;
            }
            match (l.kind, l.in_shape) {
                (LayerKind::Conv, Shape::Flat(_)) => push(Rule::ConvNeedsSpatial),
                (LayerKind::Fc, Shape::Spatial { .. }) => push(Rule::FcNeedsFlat),
                _ => {}
            }
            if l.kind == LayerKind::Conv && l.conv_out_hw().is_none() && matches!(l.in_shape, Shape::Spatial { .. }) {
                push(Rule::NonIntegralOutput { stage: "convolution" });
            } else if (l.kind == LayerKind::Fc && l.pool.is_some())
                || (l.kind == LayerKind::Conv && l.conv_out_hw().is_some() && l.out_shape().is_none())
            {
                push(Rule::NonIntegralOutput { stage: "pooling" });
            }
            if !(1..=MAX_INPUT_BITS).contains(&l.input_precision_bits) {
                push(Rule::PrecisionRange { bits: l.input_precision_bits });
            } else if i > 0 && l.input_precision_bits != 1 {
                push(Rule::PrecisionNotFirst { bits: l.input_precision_bits });
            }
            let last = i + 1 == n;
            match (last, l.activation) {
                (true, Activation::Sign) => push(Rule::LastLayerActivation),
                (false, Activation::None) => push(Rule::HiddenLayerActivation),
                _ => {}
            }
            if i == 0 {
                if !l.inputs.is_empty() || l.input_pool.is_some() {
                    push(Rule::FirstLayerInputs);
                }
                continue;
            }
            match self.combined_shape(i) {
                Err(Rule::Unresolved { .. }) => {}
                Err(rule) => push(rule),
                Ok(None) => {}
                Ok(Some(shape)) => {
                    let pooled = match l.input_pool {
                        Some(p) => match p.apply(shape) {
                            Some(s) => s,
                            None => {
                                push(Rule::NonIntegralOutput { stage: "input pooling" });
                                continue;
                            }
                        },
                        None => shape,
                    };
                    let ok = match l.kind {
                        LayerKind::Conv => pooled == l.in_shape,
                        LayerKind::Fc => pooled.len() == l.in_shape.len(),
                    };
                    if !ok {
                        push(Rule::ChainMismatch { expected: l.in_shape, found: pooled });
                    }
                }
            }
        }
        if let Some(last) = self.layers.last() {
            if let Some(shape) = last.out_shape() {
                if shape.len() != self.class_count {
                    out.push(Diagnostic {
                        layer: n - 1,
                        rule: Rule::ClassCount { expected: self.class_count, actual: shape.len() },
                    });
                }
            }
        }
        out
    }
}

fn combine_shapes(shapes: &[Shape], combine: Combine) -> std::result::Result<Shape, Rule> {
    let first = shapes[0];
    if shapes.len() == 1 {
        return Ok(first);
    }
    match combine {
        Combine::Add => {
            if shapes.iter().all(|s| *s == first) {
                Ok(first)
            } else {
                Err(Rule::CombineMismatch { combine: Combine::Add })
            }
        }
        Combine::Concat => match first {
            Shape::Flat(_) => {
                if shapes.iter().all(|s| matches!(s, Shape::Flat(_))) {
                    Ok(Shape::Flat(shapes.iter().map(Shape::len).sum()))
                } else {
                    Err(Rule::CombineMismatch { combine: Combine::Concat })
                }
            }
            Shape::Spatial { h, w, .. } => {
                let mut c = 0;
                for s in shapes {
                    match *s {
                        Shape::Spatial { h: sh, w: sw, c: sc } if sh == h && sw == w => c += sc,
                        _ => return Err(Rule::CombineMismatch { combine: Combine::Concat }),
                    }
                }
                Ok(Shape::spatial(h, w, c))
            }
        },
    }
}

/// A complete binarized network: topology plus weights and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDescriptor {
    pub topology: Topology,
    /// One `fan_in x out_channels` matrix per layer.
    pub weights: Vec<PackedBinaryTensor>,
    /// Thresholds for sign layers, `None` for the logit layer.
    pub thresholds: Vec<Option<ThresholdVector>>,
    /// Multiplier applied to last-layer pre-activations.
    pub final_scale: f64,
}

impl NetworkDescriptor {
    pub fn layers(&self) -> &[LayerDescriptor] {
        &self.topology.layers
    }

    pub fn name(&self) -> &str {
        &self.topology.name
    }

    pub fn class_count(&self) -> usize {
        self.topology.class_count
    }

    pub fn input_shape(&self) -> Option<Shape> {
        self.topology.layers.first().map(|l| l.in_shape)
    }

    /// Validates and returns the network, or every diagnostic as one error.
    pub fn checked(self) -> Result<Self> {
        let diags = validate_chain(&self);
        if diags.is_empty() {
            Ok(self)
        } else {
            let text: Vec<String> = diags.iter().map(ToString::to_string).collect();
            Err(Error::Invalid(text.join("\n")))
        }
    }
}

/// A violated model rule, reported against a layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub layer: usize,
    pub rule: Rule,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: {}", self.layer, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    ZeroSize,
    ConvNeedsSpatial,
    FcNeedsFlat,
    NonIntegralOutput {
        stage: &'static str,
    },
    ChainMismatch {
        expected: Shape,
        found: Shape,
    },
    BadSource {
        source: usize,
    },
    /// A source whose own shape is invalid; reported at that source.
    Unresolved {
        source: usize,
    },
    CombineMismatch {
        combine: Combine,
    },
    FirstLayerInputs,
    PrecisionRange {
        bits: u32,
    },
    PrecisionNotFirst {
        bits: u32,
    },
    LastLayerActivation,
    HiddenLayerActivation,
    ClassCount {
        expected: usize,
        actual: usize,
    },
    WeightLength {
        expected: usize,
        actual: usize,
    },
    MissingThresholds,
    UnexpectedThresholds,
    ThresholdLength {
        expected: usize,
        actual: usize,
    },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::ZeroSize => write!(f, "zero-sized input or output"),
            Rule::ConvNeedsSpatial => write!(f, "conv layer needs an HxWxC input shape"),
            Rule::FcNeedsFlat => write!(f, "fc layer needs a flat input shape"),
            Rule::NonIntegralOutput { stage } => write!(f, "non-integral output shape ({stage})"),
            Rule::ChainMismatch { expected, found } => {
                write!(f, "chain mismatch: declared input {expected}, sources give {found}")
            }
            Rule::BadSource { source } => write!(f, "source {source} is not an earlier layer"),
            Rule::Unresolved { source } => write!(f, "source {source} has no valid output shape"),
            Rule::CombineMismatch { combine } => write!(f, "source shapes cannot be combined by {combine:?}"),
            Rule::FirstLayerInputs => write!(f, "first layer reads the network input and takes no sources"),
            Rule::PrecisionRange { bits } => {
                write!(f, "input precision {bits} outside 1..={MAX_INPUT_BITS}")
            }
            Rule::PrecisionNotFirst { bits } => {
                write!(f, "input precision {bits} > 1 is only allowed on the first layer")
            }
            Rule::LastLayerActivation => write!(f, "last layer must emit logits (activation none)"),
            Rule::HiddenLayerActivation => write!(f, "hidden layers must use the sign activation"),
            Rule::ClassCount { expected, actual } => {
                write!(f, "class count {expected} but last layer emits {actual} values")
            }
            Rule::WeightLength { expected, actual } => {
                write!(f, "weight tensor has {actual} elements, expected fan_in x out = {expected}")
            }
            Rule::MissingThresholds => write!(f, "missing thresholds on a sign layer"),
            Rule::UnexpectedThresholds => write!(f, "thresholds given for a logit layer"),
            Rule::ThresholdLength { expected, actual } => {
                write!(f, "threshold vector length {actual}, expected {expected}")
            }
        }
    }
}

/// Checks every shape, weight and threshold invariant.
///
/// Returns an empty list iff the network is well formed.
pub fn validate_chain(net: &NetworkDescriptor) -> Vec<Diagnostic> {
    let mut out = net.topology.validate();
    let layers = &net.topology.layers;
    if net.weights.len() != layers.len() || net.thresholds.len() != layers.len() {
        let bad = net.weights.len().min(net.thresholds.len()).min(layers.len());
        out.push(Diagnostic {
            layer: bad,
            rule: Rule::WeightLength { expected: layers.len(), actual: net.weights.len() },
        });
        return out;
    }
    for (i, l) in layers.iter().enumerate() {
        let expected = l.fan_in() * l.out_channels;
        let w = &net.weights[i];
        if w.len() != expected || w.dims().len() != 2 {
            out.push(Diagnostic { layer: i, rule: Rule::WeightLength { expected, actual: w.len() } });
        }
        match (l.activation, &net.thresholds[i]) {
            (Activation::Sign, None) => out.push(Diagnostic { layer: i, rule: Rule::MissingThresholds }),
            (Activation::Sign, Some(t)) if t.len() != l.out_channels => out.push(Diagnostic {
                layer: i,
                rule: Rule::ThresholdLength { expected: l.out_channels, actual: t.len() },
            }),
            (Activation::None, Some(_)) => out.push(Diagnostic { layer: i, rule: Rule::UnexpectedThresholds }),
            _ => {}
        }
    }
    out.sort_by_key(|d| d.layer);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net_of(layers: Vec<LayerDescriptor>, class_count: usize) -> NetworkDescriptor {
        let weights =
            layers.iter().map(|l| PackedBinaryTensor::filled(vec![l.fan_in(), l.out_channels], true)).collect();
        let thresholds = layers
            .iter()
            .map(|l| (l.activation == Activation::Sign).then(|| ThresholdVector::zeros(l.out_channels)))
            .collect();
        NetworkDescriptor {
            topology: Topology { name: "t".into(), class_count, layers },
            weights,
            thresholds,
            final_scale: 1.0,
        }
    }

    #[test]
    fn valid_two_layer_net_has_no_diagnostics() {
        let net = net_of(vec![LayerDescriptor::fc(4, 3).with_input_bits(8), LayerDescriptor::fc(3, 2).logits()], 2);
        assert_eq!(validate_chain(&net), vec![]);
    }

    #[test]
    fn missing_thresholds_named_by_layer() {
        let mut net = net_of(vec![LayerDescriptor::fc(4, 3), LayerDescriptor::fc(3, 2).logits()], 2);
        net.thresholds[0] = None;
        let d = validate_chain(&net);
        assert_eq!(d, vec![Diagnostic { layer: 0, rule: Rule::MissingThresholds }]);
    }

    #[test]
    fn fractional_conv_output_is_reported() {
        // (6 - 3) / 2 is not integral
        let net =
            net_of(vec![LayerDescriptor::conv((6, 6, 1), 2, 3).with_stride(2), LayerDescriptor::fc(8, 2).logits()], 2);
        let d = validate_chain(&net);
        assert!(d.iter().any(|d| d.layer == 0 && d.to_string().contains("non-integral output shape")));
    }

    #[test]
    fn asymmetric_padding_makes_stride_two_integral() {
        let l = LayerDescriptor::conv((224, 224, 3), 64, 7).with_stride(2).with_padding(2, 3);
        assert_eq!(l.conv_out_hw(), Some((112, 112)));
    }

    #[test]
    fn chain_mismatch_is_reported() {
        let net = net_of(vec![LayerDescriptor::fc(4, 3), LayerDescriptor::fc(5, 2).logits()], 2);
        let d = validate_chain(&net);
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0].rule, Rule::ChainMismatch { .. }));
        assert_eq!(d[0].layer, 1);
    }

    #[test]
    fn precision_only_on_first_layer() {
        let net = net_of(vec![LayerDescriptor::fc(4, 3), LayerDescriptor::fc(3, 2).with_input_bits(4).logits()], 2);
        assert_eq!(validate_chain(&net)[0].rule, Rule::PrecisionNotFirst { bits: 4 });
    }

    #[test]
    fn forward_source_is_rejected() {
        let net = net_of(
            vec![
                LayerDescriptor::fc(4, 3),
                LayerDescriptor::fc(3, 3).from_layers(&[1], Combine::Concat),
                LayerDescriptor::fc(3, 2).logits(),
            ],
            2,
        );
        assert_eq!(validate_chain(&net)[0], Diagnostic { layer: 1, rule: Rule::BadSource { source: 1 } });
    }

    #[test]
    fn concat_and_add_shapes() {
        let a = Shape::spatial(4, 4, 8);
        let b = Shape::spatial(4, 4, 16);
        assert_eq!(combine_shapes(&[a, b], Combine::Concat), Ok(Shape::spatial(4, 4, 24)));
        assert!(combine_shapes(&[a, b], Combine::Add).is_err());
        assert_eq!(combine_shapes(&[a, a], Combine::Add), Ok(a));
    }

    #[test]
    fn global_input_pool_feeds_fc() {
        let layers = vec![
            LayerDescriptor::conv((4, 4, 1), 8, 1),
            LayerDescriptor::fc(8, 2).with_input_pool(Pool::avg(4, 4)).logits(),
        ];
        let net = net_of(layers, 2);
        assert_eq!(validate_chain(&net), vec![]);
        assert_eq!(net.layers()[1].pool_divisor(), 16);
    }
}
