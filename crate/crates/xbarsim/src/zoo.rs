//! Shape-only descriptors of three ImageNet-scale binary networks, used for
//! cost modeling (no weights).
//!
//! Stride-2 convolutions use "same" padding split as `(k-2)/2` before and
//! the rest after, so every output extent is integral.

use crate::ir::{Combine, LayerDescriptor, Pool, Shape, Topology};

/// First-layer input precision of the zoo descriptors.
pub const ZOO_INPUT_BITS: u32 = 8;

pub const NAMES: [&str; 3] = ["alexnet", "resnet18", "densenet28"];

/// Looks up a zoo topology by name.
pub fn by_name(name: &str) -> Option<Topology> {
    match name {
        "alexnet" => Some(alexnet()),
        "resnet18" => Some(resnet18()),
        "densenet28" => Some(densenet28()),
        _ => None,
    }
}

fn spatial(l: &LayerDescriptor) -> (usize, usize, usize) {
    match l.out_shape().expect("zoo shapes are integral") {
        Shape::Spatial { h, w, c } => (h, w, c),
        Shape::Flat(_) => unreachable!("conv output is spatial"),
    }
}

/// Five conv layers and three large fc layers; 227x227x3 input.
pub fn alexnet() -> Topology {
    let mut layers = Vec::new();
    let c1 = LayerDescriptor::conv((227, 227, 3), 64, 11)
        .with_stride(4)
        .with_pool(Pool::max(3, 2))
        .with_input_bits(ZOO_INPUT_BITS);
    let s = spatial(&c1);
    layers.push(c1);
    let c2 = LayerDescriptor::conv(s, 192, 5).with_padding(2, 2).with_pool(Pool::max(3, 2));
    let s = spatial(&c2);
    layers.push(c2);
    let c3 = LayerDescriptor::conv(s, 384, 3).with_padding(1, 1);
    let s = spatial(&c3);
    layers.push(c3);
    layers.push(LayerDescriptor::conv(s, 384, 3).with_padding(1, 1));
    let c5 = LayerDescriptor::conv(s, 256, 3).with_padding(1, 1).with_pool(Pool::max(3, 2));
    let (h, w, c) = spatial(&c5);
    layers.push(c5);
    layers.push(LayerDescriptor::fc(h * w * c, 4096));
    layers.push(LayerDescriptor::fc(4096, 4096));
    layers.push(LayerDescriptor::fc(4096, 1000).logits());
    Topology { name: "alexnet".into(), class_count: 1000, layers }
}

/// Eighteen-layer residual network. A residual sum is never materialized
/// as a layer: each consumer adds the outputs that make up the running sum,
/// and a stride-2 stage entry restarts it with a 1x1 projection followed by
/// 2x2 average pooling.
pub fn resnet18() -> Topology {
    let mut layers = Vec::new();
    let stem = LayerDescriptor::conv((224, 224, 3), 64, 7)
        .with_stride(2)
        .with_padding(2, 3)
        .with_pool(Pool::max(2, 2))
        .with_input_bits(ZOO_INPUT_BITS);
    let (mut h, _, mut c) = spatial(&stem);
    layers.push(stem);
    let mut stream: Vec<usize> = vec![0];
    for (stage, co) in [64usize, 128, 256, 512].into_iter().enumerate() {
        for block in 0..2 {
            let down = stage > 0 && block == 0;
            let a = if down {
                LayerDescriptor::conv((h, h, c), co, 3).with_stride(2).with_padding(0, 1)
            } else {
                LayerDescriptor::conv((h, h, c), co, 3).with_padding(1, 1)
            }
            .from_layers(&stream, Combine::Add);
            let ai = layers.len();
            let (h2, _, _) = spatial(&a);
            layers.push(a);
            if down {
                let sc = LayerDescriptor::conv((h, h, c), co, 1)
                    .with_pool(Pool::avg(2, 2))
                    .from_layers(&stream, Combine::Add);
                stream = vec![layers.len()];
                layers.push(sc);
            }
            let b = LayerDescriptor::conv((h2, h2, co), co, 3).with_padding(1, 1).from_layers(&[ai], Combine::Concat);
            stream.insert(0, layers.len());
            layers.push(b);
            h = h2;
            c = co;
        }
    }
    layers.push(
        LayerDescriptor::fc(c, 1000).with_input_pool(Pool::avg(h, h)).from_layers(&stream, Combine::Add).logits(),
    );
    Topology { name: "resnet18".into(), class_count: 1000, layers }
}

/// Densely connected network with blocks of 6, 6, 6 and 5 layers (growth
/// 64) and 1x1 transitions with 2x2 average pooling.
pub fn densenet28() -> Topology {
    const GROWTH: usize = 64;
    let mut layers = Vec::new();
    let stem = LayerDescriptor::conv((224, 224, 3), 64, 7)
        .with_stride(2)
        .with_padding(2, 3)
        .with_pool(Pool::max(2, 2))
        .with_input_bits(ZOO_INPUT_BITS);
    let (mut h, _, mut c) = spatial(&stem);
    layers.push(stem);
    let mut members: Vec<usize> = vec![0];
    // output channels of each transition: input channels / reduction,
    // rounded to a multiple of 32
    let reductions = [2.7, 2.7, 2.2];
    for (bi, n) in [6usize, 6, 6, 5].into_iter().enumerate() {
        for _ in 0..n {
            let l =
                LayerDescriptor::conv((h, h, c), GROWTH, 3).with_padding(1, 1).from_layers(&members, Combine::Concat);
            members.push(layers.len());
            layers.push(l);
            c += GROWTH;
        }
        if let Some(&red) = reductions.get(bi) {
            let co = ((c as f64 / red / 32.0).round() as usize) * 32;
            let t = LayerDescriptor::conv((h, h, c), co, 1)
                .with_pool(Pool::avg(2, 2))
                .from_layers(&members, Combine::Concat);
            members = vec![layers.len()];
            layers.push(t);
            h /= 2;
            c = co;
        }
    }
    layers.push(
        LayerDescriptor::fc(c, 1000).with_input_pool(Pool::avg(h, h)).from_layers(&members, Combine::Concat).logits(),
    );
    Topology { name: "densenet28".into(), class_count: 1000, layers }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_topologies_validate() {
        for name in NAMES {
            let t = by_name(name).unwrap();
            assert_eq!(t.validate(), vec![], "{name}");
        }
    }

    #[test]
    fn layer_counts() {
        assert_eq!(alexnet().layers.len(), 8);
        assert_eq!(resnet18().layers.len(), 21);
        assert_eq!(densenet28().layers.len(), 28);
    }

    #[test]
    fn alexnet_flatten_is_9216() {
        assert_eq!(alexnet().layers[5].in_shape, Shape::Flat(9216));
    }

    #[test]
    fn parameter_counts() {
        let params = |t: Topology| t.layers.iter().map(|l| l.fan_in() * l.out_channels).sum::<usize>();
        assert_eq!(params(alexnet()), 61_827_776);
        assert_eq!(params(resnet18()), 11_678_912);
        assert_eq!(params(densenet28()), 5_111_488);
    }
}
