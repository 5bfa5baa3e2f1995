//! Small random networks for property tests.

use proptest::prelude::*;
use xbarsim::ir::{Combine, LayerDescriptor, NetworkDescriptor, PackedBinaryTensor, Pool, ThresholdVector, Topology};

fn signs(n: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1 } else { -1 }), n)
}

fn weights(fan_in: usize, out: usize) -> impl Strategy<Value = PackedBinaryTensor> {
    signs(fan_in * out).prop_map(move |s| PackedBinaryTensor::from_signs(vec![fan_in, out], &s).unwrap())
}

fn thresholds(n: usize, spread: f64) -> impl Strategy<Value = ThresholdVector> {
    prop::collection::vec(-spread..spread, n).prop_map(ThresholdVector::new)
}

/// conv (optional padding, stride, max-pool) → conv → fc logits.
pub fn conv_net() -> impl Strategy<Value = NetworkDescriptor> {
    (
        4usize..9,
        4usize..9,
        1usize..4,
        1usize..20,
        1usize..4,
        0usize..2,
        1usize..3,
        prop::bool::ANY,
        1usize..12,
        2usize..6,
    )
        .prop_filter_map("shape", |(h, w, c, o1, k, pad, stride, pool, o2, classes)| {
            let mut l0 =
                LayerDescriptor::conv((h, w, c), o1, k).with_padding(pad, pad).with_stride(stride).with_input_bits(8);
            let (oh, ow) = l0.conv_out_hw()?;
            if pool && oh >= 2 && ow >= 2 {
                l0 = l0.with_pool(Pool::max(2, 2));
            }
            let s0 = l0.out_shape()?;
            let (h1, w1, c1) = (s0.to_vec()[0], s0.to_vec()[1], s0.to_vec()[2]);
            let k1 = if h1 >= 2 && w1 >= 2 { 2 } else { 1 };
            let l1 = LayerDescriptor::conv((h1, w1, c1), o2, k1);
            let s1 = l1.out_shape()?;
            let l2 = LayerDescriptor::fc(s1.len(), classes).logits();
            Some(Topology { name: "random".into(), class_count: classes, layers: vec![l0, l1, l2] })
        })
        .prop_flat_map(with_parameters)
}

/// Two sign branches off one conv, merged by `combine`, then logits.
pub fn branch_net(combine: Combine) -> impl Strategy<Value = NetworkDescriptor> {
    (3usize..7, 1usize..3, 1usize..10, 2usize..5).prop_flat_map(move |(n, c, o, classes)| {
        let l0 = LayerDescriptor::conv((n, n, c), o, 1).with_input_bits(8);
        let l1 = LayerDescriptor::conv((n, n, o), o, 1).from_layers(&[0], Combine::Concat);
        let merged = match combine {
            Combine::Add => o,
            Combine::Concat => 2 * o,
        };
        let l2 = LayerDescriptor::fc(n * n * merged, classes).from_layers(&[0, 1], combine).logits();
        with_parameters(Topology { name: "branch".into(), class_count: classes, layers: vec![l0, l1, l2] })
    })
}

/// Random weights, thresholds and final scale for `topo`.
pub fn with_parameters(topo: Topology) -> impl Strategy<Value = NetworkDescriptor> {
    let n = topo.layers.len();
    let ws: Vec<_> = topo.layers.iter().map(|l| weights(l.fan_in(), l.out_channels)).collect();
    let ts: Vec<_> = topo
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let spread = (l.fan_in() as f64).sqrt() * if i == 0 { 0.5 } else { 1.0 };
            let keep = i + 1 < n;
            thresholds(l.out_channels, spread.max(0.5)).prop_map(move |t| keep.then_some(t))
        })
        .collect();
    (ws, ts, 0.01f64..2.0).prop_map(move |(weights, thresholds, final_scale)| {
        NetworkDescriptor { topology: topo.clone(), weights, thresholds, final_scale }.checked().unwrap()
    })
}

/// One input image for `net`, values in [-1, 1].
pub fn image(net: &NetworkDescriptor) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, net.input_shape().unwrap().len())
}
