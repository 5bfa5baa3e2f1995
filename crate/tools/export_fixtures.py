#!/usr/bin/env python3
"""Train the three tiny BNN presets on scikit-learn digits and write the
checked-in fixture bundles used by the simulator test suites.

Writes, under the output directory:

    digits/            dataset (data.bin, labels.bin, shape.json)
    tiny-alexnet/      model bundle + reference.json
    tiny-resnet/
    tiny-densenet/

Weights are binary everywhere; activations are binary except the input of
the first layer. Batch-norm is folded into per-channel thresholds. The
reference logits come from a plain numpy integer forward pass that follows
the bundle semantics documented in book/src/bundle-format.md.

Usage: python3 tools/export_fixtures.py --out fixtures --seed 7 --epochs 60
"""

import argparse
import json
import math
import os

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.datasets import load_digits

# ---------------------------------------------------------------------------
# presets


def conv(c_in, c_out, h, k=3, pad=1, pool=None, inputs=None, combine="concat"):
    return dict(kind="conv", c_in=c_in, out=c_out, h=h, k=k, pad=pad, pool=pool,
                inputs=inputs, combine=combine)


def fc(f_in, f_out, inputs=None, combine="concat"):
    return dict(kind="fc", c_in=f_in, out=f_out, inputs=inputs, combine=combine)


PRESETS = {
    "tiny-alexnet": [
        conv(1, 32, 8, pool=("max", 2, 2)),
        conv(32, 64, 4, pool=("max", 2, 2)),
        fc(256, 512),
        fc(512, 512),
        fc(512, 10),
    ],
    "tiny-resnet": [
        conv(1, 32, 8),
        conv(32, 32, 8, inputs=[0]),
        conv(32, 32, 8, inputs=[1]),
        conv(32, 64, 8, pool=("max", 2, 2), inputs=[2, 0], combine="add"),
        conv(64, 64, 4, inputs=[3]),
        conv(64, 64, 4, inputs=[4]),
        fc(1024, 10, inputs=[5, 3], combine="add"),
    ],
    "tiny-densenet": [
        conv(1, 16, 8),
        conv(16, 16, 8, inputs=[0]),
        conv(32, 16, 8, inputs=[0, 1]),
        conv(48, 32, 8, k=1, pad=0, pool=("avg", 2, 2), inputs=[0, 1, 2]),
        conv(32, 16, 4, inputs=[3]),
        conv(48, 16, 4, inputs=[3, 4]),
        fc(1024, 10, inputs=[3, 4, 5]),
    ],
}

INPUT_BITS = 8

# ---------------------------------------------------------------------------
# training (torch, NCHW)


class SignSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.where(x >= 0, torch.ones_like(x), -torch.ones_like(x))

    @staticmethod
    def backward(ctx, g):
        (x,) = ctx.saved_tensors
        return g * (x.abs() <= 1).to(g.dtype)


sign = SignSTE.apply


class Net(nn.Module):
    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.weights = nn.ParameterList()
        self.bns = nn.ModuleList()
        for i, l in enumerate(spec):
            if l["kind"] == "conv":
                w = torch.randn(l["out"], l["c_in"], l["k"], l["k"]) * 0.1
            else:
                w = torch.randn(l["out"], l["c_in"]) * 0.1
            self.weights.append(nn.Parameter(w))
            last = i == len(spec) - 1
            self.bns.append(nn.Identity() if last else nn.BatchNorm1d(l["out"]) if l["kind"] == "fc"
                            else nn.BatchNorm2d(l["out"]))
        self.alpha = nn.Parameter(torch.tensor(0.1))

    def forward(self, x):
        outs = []
        for i, l in enumerate(self.spec):
            if i == 0:
                h = x
            else:
                srcs = l["inputs"] if l["inputs"] is not None else [i - 1]
                parts = [outs[s] for s in srcs]
                if l["combine"] == "add" and len(parts) > 1:
                    h = sum(parts)
                else:
                    h = torch.cat(parts, dim=1)
            wb = sign(self.weights[i])
            if l["kind"] == "conv":
                z = F.conv2d(h, wb, padding=l["pad"])
                if l["pool"]:
                    mode, win, st = l["pool"]
                    z = F.max_pool2d(z, win, st) if mode == "max" else F.avg_pool2d(z, win, st)
            else:
                # flatten in HWC order to match the bundle layout
                if h.dim() == 4:
                    h = h.permute(0, 2, 3, 1).reshape(h.shape[0], -1)
                z = F.linear(h, wb)
            if i == len(self.spec) - 1:
                return z * self.alpha
            outs.append(sign(self.bns[i](z)))
        raise AssertionError


def train(spec, xs, ys, epochs, seed):
    torch.manual_seed(seed)
    net = Net(spec)
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    x = torch.tensor(xs).permute(0, 3, 1, 2)
    y = torch.tensor(ys, dtype=torch.long)
    g = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        net.train()
        perm = torch.randperm(len(x), generator=g)
        for b in range(0, len(x), 64):
            idx = perm[b:b + 64]
            loss = F.cross_entropy(net(x[idx]), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            with torch.no_grad():
                for p in net.weights:
                    p.clamp_(-1, 1)
                for bn in net.bns:
                    if isinstance(bn, (nn.BatchNorm1d, nn.BatchNorm2d)):
                        # positive gamma keeps max-pool/threshold order exact
                        bn.weight.clamp_(min=1e-3)
        sched.step()
    net.eval()
    with torch.no_grad():
        acc = (net(x).argmax(1) == y).float().mean().item()
    return net, acc


# ---------------------------------------------------------------------------
# export


def fold(net, i):
    """Return (weight matrix K x N of +-1 ints, thresholds) for layer i."""
    l = net.spec[i]
    w = torch.where(net.weights[i] >= 0, 1, -1).detach().numpy().astype(np.int64)
    if l["kind"] == "conv":
        mat = w.transpose(2, 3, 1, 0).reshape(-1, l["out"])  # (kh, kw, c) x out
    else:
        mat = w.T.copy()
    if i == len(net.spec) - 1:
        return mat, None
    bn = net.bns[i]
    gamma = bn.weight.detach().double().numpy()
    beta = bn.bias.detach().double().numpy()
    mu = bn.running_mean.detach().double().numpy()
    sigma = np.sqrt(bn.running_var.detach().double().numpy() + bn.eps)
    if np.any(gamma == 0):
        raise SystemExit(f"layer {i}: gamma == 0 cannot be folded")
    tau = mu - beta * sigma / gamma
    flip = gamma < 0
    if np.any(flip):
        if l.get("pool") and l["pool"][0] == "max":
            raise SystemExit(f"layer {i}: negative gamma under max pooling")
        mat[:, flip] *= -1
        tau[flip] = -tau[flip]
    return mat, tau


def pack_bits(mat):
    flat = (mat.reshape(-1) > 0).astype(np.uint8)
    return np.packbits(flat, bitorder="little").tobytes()


def write_bundle(net, name, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    layers = []
    folded = []
    for i, l in enumerate(net.spec):
        mat, tau = fold(net, i)
        folded.append((mat, tau))
        wname = f"layer{i}.weights.bin"
        with open(os.path.join(out_dir, wname), "wb") as f:
            f.write(pack_bits(mat))
        entry = {"kind": l["kind"]}
        if l["kind"] == "conv":
            entry["in_shape"] = [l["h"], l["h"], l["c_in"]]
            entry["kernel"] = [l["k"], l["k"]]
            entry["stride"] = 1
            entry["padding"] = l["pad"]
        else:
            entry["in_shape"] = [l["c_in"]]
        entry["out_channels"] = l["out"]
        if l.get("pool"):
            mode, win, st = l["pool"]
            entry["pool"] = {"mode": mode, "window": win, "stride": st}
        last = i == len(net.spec) - 1
        entry["activation"] = "none" if last else "sign"
        entry["input_precision_bits"] = INPUT_BITS if i == 0 else 1
        if l["inputs"] is not None:
            entry["inputs"] = l["inputs"]
            entry["combine"] = l["combine"]
        entry["weights"] = wname
        if tau is not None:
            tname = f"layer{i}.thresholds.bin"
            with open(os.path.join(out_dir, tname), "wb") as f:
                f.write(tau.astype("<f8").tobytes())
            entry["thresholds"] = tname
        layers.append(entry)
    manifest = {
        "format_version": 1,
        "name": name,
        "class_count": 10,
        "final_scale": float(net.alpha.detach().double().item()),
        "layers": layers,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest, folded


# ---------------------------------------------------------------------------
# integer reference forward (numpy, HWC)


def round_half_away(v):
    t = np.trunc(v)
    frac = v - t
    return t + np.where(np.abs(frac) >= 0.5, np.sign(v), 0.0)


def quantize(x, bits):
    x = x.astype(np.float64)
    m = float(np.max(np.abs(x)))
    if m == 0.0:
        return np.zeros(x.shape, dtype=np.int64), 1.0
    if bits == 1:
        scale = m
        lo, hi = -1, 0
    else:
        scale = m / float(2 ** (bits - 1) - 1)
        lo, hi = -(2 ** (bits - 1)), 2 ** (bits - 1) - 1
    q = np.clip(round_half_away(x / scale), lo, hi).astype(np.int64)
    return q, scale


def im2col(a, k, pad):
    h, w, c = a.shape
    p = np.zeros((h + 2 * pad, w + 2 * pad, c), dtype=np.int64)
    p[pad:pad + h, pad:pad + w] = a
    oh, ow = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    rows = []
    for y in range(oh):
        for x in range(ow):
            rows.append(p[y:y + k, x:x + k, :].reshape(-1))
    return np.stack(rows), oh, ow


def pool_int(z, oh, ow, pool):
    """z: (oh*ow, C) int. Returns (values, area) where avg gives window sums."""
    if pool is None:
        return z, oh, ow, 1
    mode, win, st = pool
    c = z.shape[1]
    g = z.reshape(oh, ow, c)
    ph, pw = (oh - win) // st + 1, (ow - win) // st + 1
    out = np.zeros((ph, pw, c), dtype=np.int64)
    for y in range(ph):
        for x in range(pw):
            blk = g[y * st:y * st + win, x * st:x * st + win, :].reshape(-1, c)
            out[y, x] = blk.max(0) if mode == "max" else blk.sum(0)
    return out.reshape(-1, c), ph, pw, (win * win if mode == "avg" else 1)


def reference_forward(manifest, folded, x, bits):
    layers = manifest["layers"]
    outs = []
    for i, (l, (mat, tau)) in enumerate(zip(layers, folded)):
        if i == 0:
            q, scale = quantize(x, bits)
            act = q
        else:
            scale = 1.0
            srcs = l.get("inputs", [i - 1])
            parts = [outs[s] for s in srcs]
            if l.get("combine", "concat") == "add" and len(parts) > 1:
                act = sum(parts)
            else:
                act = np.concatenate(parts, axis=2)
        if l["kind"] == "conv":
            patches, oh, ow = im2col(act, l["kernel"][0], l["padding"])
        else:
            patches, oh, ow = act.reshape(1, -1), 1, 1
        z = patches @ mat
        pool = None
        if "pool" in l:
            pool = (l["pool"]["mode"], l["pool"]["window"], l["pool"]["stride"])
        v, ph, pw, area = pool_int(z, oh, ow, pool)
        if tau is None:
            return [float(t) * scale / float(area) * manifest["final_scale"] for t in v.reshape(-1)]
        keep = v.astype(np.float64) * scale >= tau[None, :] * float(area)
        outs.append(np.where(keep, 1, -1).astype(np.int64).reshape(ph, pw, -1))
    raise AssertionError


# ---------------------------------------------------------------------------


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="fixtures")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--only", default=None)
    args = ap.parse_args()

    digits = load_digits()
    xs = (digits.data.astype(np.float32) / 16.0).reshape(-1, 8, 8, 1)
    ys = digits.target.astype(np.int32)

    ddir = os.path.join(args.out, "digits")
    os.makedirs(ddir, exist_ok=True)
    with open(os.path.join(ddir, "data.bin"), "wb") as f:
        f.write(xs.astype("<f4").tobytes())
    with open(os.path.join(ddir, "labels.bin"), "wb") as f:
        f.write(ys.astype("<i4").tobytes())
    with open(os.path.join(ddir, "shape.json"), "w") as f:
        json.dump({"num_samples": int(len(xs)), "sample_shape": [8, 8, 1], "layout": "HWC",
                   "class_count": 10}, f, indent=2)
        f.write("\n")

    for name, spec in PRESETS.items():
        if args.only and name != args.only:
            continue
        net, float_acc = train(spec, xs, ys, args.epochs, args.seed)
        manifest, folded = write_bundle(net, name, os.path.join(args.out, name))
        ref_idx = list(range(32))
        logits = [reference_forward(manifest, folded, xs[i], INPUT_BITS) for i in ref_idx]
        correct = 0
        for i in range(len(xs)):
            lg = reference_forward(manifest, folded, xs[i], INPUT_BITS)
            correct += int(np.argmax(lg) == ys[i])
        summary = {
            "input_precision_bits": INPUT_BITS,
            "dataset": "../digits",
            "samples": ref_idx,
            "logits": logits,
            "layers": [{"kind": l["kind"],
                        "fan_in": int(f[0].shape[0]),
                        "out_channels": int(f[0].shape[1])} for l, f in zip(manifest["layers"], folded)],
            "framework_accuracy": float_acc,
            "integer_accuracy": correct / len(xs),
        }
        with open(os.path.join(args.out, name, "reference.json"), "w") as f:
            json.dump(summary, f, indent=1)
            f.write("\n")
        print(f"{name}: float-input accuracy {float_acc:.4f}, "
              f"{INPUT_BITS}-bit integer accuracy {correct / len(xs):.4f}")


if __name__ == "__main__":
    main()
