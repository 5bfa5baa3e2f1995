//! Plain integer inference straight from the layer definitions: nested-loop
//! convolution on HWC tensors, no lowering, no tiling, no converters.

use xbarsim::ir::{Activation, Combine, LayerKind, NetworkDescriptor, PoolMode, Shape};

#[derive(Clone)]
struct Grid {
    h: usize,
    w: usize,
    c: usize,
    v: Vec<i64>,
}

impl Grid {
    fn at(&self, y: usize, x: usize, ch: usize) -> i64 {
        self.v[(y * self.w + x) * self.c + ch]
    }
}

fn grid(shape: Shape, v: Vec<i64>) -> Grid {
    match shape {
        Shape::Spatial { h, w, c } => Grid { h, w, c, v },
        Shape::Flat(n) => Grid { h: 1, w: 1, c: n, v },
    }
}

fn pool(g: &Grid, mode: PoolMode, win: usize, stride: usize) -> Grid {
    let oh = (g.h - win) / stride + 1;
    let ow = (g.w - win) / stride + 1;
    let mut v = Vec::new();
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..g.c {
                let cells = (0..win).flat_map(|dy| (0..win).map(move |dx| (dy, dx)));
                let vals = cells.map(|(dy, dx)| g.at(y * stride + dy, x * stride + dx, ch));
                v.push(match mode {
                    PoolMode::Max => vals.max().unwrap(),
                    PoolMode::Avg => vals.sum(),
                });
            }
        }
    }
    Grid { h: oh, w: ow, c: g.c, v }
}

/// Symmetric dynamic quantization, written out independently of the crate.
pub fn quantize(x: &[f32], bits: u32) -> (Vec<i64>, f64) {
    let m = x.iter().map(|&v| (v as f64).abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return (vec![0; x.len()], 1.0);
    }
    let (scale, lo, hi) = if bits == 1 {
        (m, -1.0, 0.0)
    } else {
        let top = ((1u64 << (bits - 1)) - 1) as f64;
        (m / top, -top - 1.0, top)
    };
    (x.iter().map(|&v| ((v as f64) / scale).round().clamp(lo, hi) as i64).collect(), scale)
}

/// Logits of `net` for one image at input precision `bits`.
pub fn forward(net: &NetworkDescriptor, x: &[f32], bits: u32) -> Vec<f64> {
    let layers = net.layers();
    let mut outs: Vec<Grid> = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let (input, scale) = if i == 0 {
            let (q, s) = quantize(x, bits);
            (grid(l.in_shape, q), s)
        } else {
            let srcs = net.topology.sources(i);
            let parts: Vec<&Grid> = srcs.iter().map(|&s| &outs[s]).collect();
            let mut g = if parts.len() == 1 {
                parts[0].clone()
            } else if l.combine == Combine::Add {
                let mut g = parts[0].clone();
                for p in &parts[1..] {
                    for (a, b) in g.v.iter_mut().zip(&p.v) {
                        *a += b;
                    }
                }
                g
            } else {
                let (h, w) = (parts[0].h, parts[0].w);
                let c = parts.iter().map(|p| p.c).sum();
                let mut v = Vec::new();
                for y in 0..h {
                    for xx in 0..w {
                        for p in &parts {
                            for ch in 0..p.c {
                                v.push(p.at(y, xx, ch));
                            }
                        }
                    }
                }
                Grid { h, w, c, v }
            };
            if let Some(p) = l.input_pool {
                g = pool(&g, p.mode, p.window, p.stride);
            }
            (g, 1.0)
        };
        let w = &net.weights[i];
        let n = l.out_channels;
        let mut z = match l.kind {
            LayerKind::Fc => {
                let mut v = vec![0i64; n];
                for (k, a) in input.v.iter().enumerate() {
                    for (o, acc) in v.iter_mut().enumerate() {
                        *acc += a * w.get2(k, o) as i64;
                    }
                }
                Grid { h: 1, w: 1, c: n, v }
            }
            LayerKind::Conv => {
                let (kh, kw) = l.kernel;
                let (oh, ow) = l.conv_out_hw().unwrap();
                let pb = l.padding.begin as isize;
                let mut v = vec![0i64; oh * ow * n];
                for y in 0..oh {
                    for xx in 0..ow {
                        for o in 0..n {
                            let mut acc = 0i64;
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let iy = (y * l.stride + dy) as isize - pb;
                                    let ix = (xx * l.stride + dx) as isize - pb;
                                    if iy < 0 || ix < 0 || iy >= input.h as isize || ix >= input.w as isize {
                                        continue;
                                    }
                                    for ch in 0..input.c {
                                        let k = (dy * kw + dx) * input.c + ch;
                                        acc += input.at(iy as usize, ix as usize, ch) * w.get2(k, o) as i64;
                                    }
                                }
                            }
                            v[(y * ow + xx) * n + o] = acc;
                        }
                    }
                }
                Grid { h: oh, w: ow, c: n, v }
            }
        };
        if let Some(p) = l.pool {
            z = pool(&z, p.mode, p.window, p.stride);
        }
        let m = (l.pool.map_or(1, |p| p.area()) * l.input_pool.map_or(1, |p| p.area())) as f64;
        match l.activation {
            Activation::Sign => {
                let tau = net.thresholds[i].as_ref().unwrap().as_slice();
                let v =
                    z.v.iter()
                        .enumerate()
                        .map(|(j, &s)| if (s as f64) * scale >= tau[j % n] * m { 1 } else { -1 })
                        .collect();
                outs.push(Grid { v, ..z });
            }
            Activation::None => {
                return z.v.iter().map(|&s| (s as f64) * scale / m * net.final_scale).collect();
            }
        }
    }
    unreachable!("last layer emits logits")
}
