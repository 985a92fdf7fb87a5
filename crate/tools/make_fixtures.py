#!/usr/bin/env python3
"""Generates the committed test fixtures under fixtures/.

Every model is described by the same layer list that the Rust loader reads
(arch.json), built as a torch module from that list, optionally trained,
and exported as a DMBPW001 weight file with batchnorm left unfused.

    python3 tools/make_fixtures.py [--out fixtures] [--seed 0]

Output is byte-for-byte reproducible for a fixed seed (single thread, CPU).
"""

import argparse
import io
import json
import os
import struct
import zlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

MAGIC_WEIGHTS = b"DMBPW001"
MAGIC_MAP = b"DMBPA001"


# ---------------------------------------------------------------- layers


def dense(i, o, bias=True):
    return {"kind": "dense", "in_features": i, "out_features": o, "bias": bias}


def conv(i, o, k, stride=1, pad=0, bias=True):
    return {
        "kind": "conv2d",
        "in_channels": i,
        "out_channels": o,
        "kernel": [k, k],
        "stride": [stride, stride],
        "padding": [pad, pad],
        "bias": bias,
    }


RELU = {"kind": "relu"}
BN = {"kind": "batchnorm"}
FLATTEN = {"kind": "flatten"}
GAP = {"kind": "global_avgpool"}


def maxpool(k, s):
    return {"kind": "maxpool", "kernel": k, "stride": s}


def residual(main, projection=None, post_relu=True):
    spec = {"kind": "residual_block", "main": main, "post_relu": post_relu}
    if projection is not None:
        spec["projection"] = projection
    return spec


class Seq(nn.Module):
    """Runs a layer list; module names mirror the exported tensor prefixes."""

    def __init__(self, specs):
        super().__init__()
        self.specs = specs
        self.mods = nn.ModuleDict()
        channels = None
        for i, s in enumerate(specs):
            k = s["kind"]
            name = f"layer{i}"
            if k == "dense":
                self.mods[name] = nn.Linear(s["in_features"], s["out_features"], bias=s["bias"])
                channels, is_conv = s["out_features"], False
            elif k == "conv2d":
                self.mods[name] = nn.Conv2d(
                    s["in_channels"],
                    s["out_channels"],
                    tuple(s["kernel"]),
                    stride=tuple(s["stride"]),
                    padding=tuple(s["padding"]),
                    bias=s["bias"],
                )
                channels, is_conv = s["out_channels"], True
            elif k == "batchnorm":
                self.mods[name] = nn.BatchNorm2d(channels) if is_conv else nn.BatchNorm1d(channels)
            elif k == "residual_block":
                self.mods[name + "_main"] = Seq(s["main"])
                if "projection" in s:
                    self.mods[name + "_proj"] = Seq(s["projection"])
                last = [l for l in s["main"] if l["kind"] in ("conv2d", "dense")][-1]
                channels = last.get("out_channels", last.get("out_features"))

    def forward(self, x):
        for i, s in enumerate(self.specs):
            k = s["kind"]
            name = f"layer{i}"
            if k in ("dense", "conv2d", "batchnorm"):
                x = self.mods[name](x)
            elif k == "relu":
                x = F.relu(x)
            elif k == "maxpool":
                x = F.max_pool2d(x, s["kernel"], s["stride"])
            elif k == "avgpool":
                x = F.avg_pool2d(x, s["kernel"], s["stride"])
            elif k == "global_avgpool":
                x = x.mean(dim=(2, 3))
            elif k == "flatten":
                x = x.flatten(1)
            elif k == "residual_block":
                skip = self.mods[name + "_proj"](x) if name + "_proj" in self.mods else x
                x = self.mods[name + "_main"](x) + skip
                if s["post_relu"]:
                    x = F.relu(x)
            else:
                raise ValueError(f"unsupported layer kind {k!r} at {name}")
        return x


# ---------------------------------------------------------------- export


def export_tensors(model, specs, prefix="", source="", out=None, mapping=None):
    """Collects (name, array) pairs in forward order plus a name mapping."""
    out = [] if out is None else out
    mapping = [] if mapping is None else mapping
    for i, s in enumerate(specs):
        name = f"{prefix}layer{i}"
        src = f"{source}mods.layer{i}"
        m = model.mods[f"layer{i}"] if f"layer{i}" in model.mods else None
        k = s["kind"]
        if k in ("dense", "conv2d"):
            pairs = [("weight", "weight")] + ([("bias", "bias")] if s["bias"] else [])
        elif k == "batchnorm":
            pairs = [("weight", "gamma"), ("bias", "beta"), ("running_mean", "mean"), ("running_var", "var")]
        elif k == "residual_block":
            export_tensors(model.mods[f"layer{i}_main"], s["main"], f"{name}.main.", f"{src}_main.", out, mapping)
            if "projection" in s:
                export_tensors(
                    model.mods[f"layer{i}_proj"], s["projection"], f"{name}.proj.", f"{src}_proj.", out, mapping
                )
            continue
        else:
            continue
        for attr, target in pairs:
            t = getattr(m, attr).detach().cpu().numpy().astype(np.float32)
            out.append((f"{name}.{target}", t))
            mapping.append({"source": f"{src}.{attr}", "target": f"{name}.{target}"})
        if k == "batchnorm":
            out.append((f"{name}.eps", np.array([m.eps], dtype=np.float32)))
            mapping.append({"source": f"{src}.eps", "target": f"{name}.eps"})
    return out, mapping


def weight_bytes(tensors):
    buf = io.BytesIO()
    buf.write(MAGIC_WEIGHTS)
    buf.write(struct.pack("<I", len(tensors)))
    for name, t in tensors:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", t.ndim))
        for d in t.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return buf.getvalue()


def layer_shapes(specs, shape, prefix=""):
    """Rows for parametric layers as the loader reports them after fusion."""
    rows = []
    for i, s in enumerate(specs):
        name = f"{prefix}layer{i}"
        k = s["kind"]
        nxt = specs[i + 1]["kind"] if i + 1 < len(specs) else None
        if k == "dense":
            out = [s["out_features"]]
            fused_bias = s["bias"] or nxt == "batchnorm"
            params = s["in_features"] * s["out_features"] + (s["out_features"] if fused_bias else 0)
            rows.append({"name": name, "kind": k, "in_shape": shape, "out_shape": out, "params": params})
            shape = out
        elif k == "conv2d":
            c, h, w = shape
            kh, kw = s["kernel"]
            oh = (h + 2 * s["padding"][0] - kh) // s["stride"][0] + 1
            ow = (w + 2 * s["padding"][1] - kw) // s["stride"][1] + 1
            out = [s["out_channels"], oh, ow]
            fused_bias = s["bias"] or nxt == "batchnorm"
            params = s["out_channels"] * c * kh * kw + (s["out_channels"] if fused_bias else 0)
            rows.append({"name": name, "kind": k, "in_shape": shape, "out_shape": out, "params": params})
            shape = out
        elif k in ("maxpool", "avgpool"):
            c, h, w = shape
            shape = [c, (h - s["kernel"]) // s["stride"] + 1, (w - s["kernel"]) // s["stride"] + 1]
        elif k == "global_avgpool":
            shape = [shape[0]]
        elif k == "flatten":
            shape = [int(np.prod(shape))]
        elif k == "residual_block":
            main_rows, out = layer_shapes(s["main"], shape, f"{name}.main.")
            rows += main_rows
            if "projection" in s:
                rows += layer_shapes(s["projection"], shape, f"{name}.proj.")[0]
            shape = out
    return rows, shape


def write_model(out_dir, model_id, model, specs, input_shape, classes, preprocess, gen):
    os.makedirs(out_dir, exist_ok=True)
    model.eval()
    arch = {
        "model_id": model_id,
        "input_shape": list(input_shape),
        "class_count": classes,
        "preprocess": preprocess,
        "layers": specs,
    }
    with open(os.path.join(out_dir, "arch.json"), "w") as f:
        json.dump(arch, f, indent=2)
        f.write("\n")
    tensors, mapping = export_tensors(model, specs)
    with open(os.path.join(out_dir, "model.dmbpw"), "wb") as f:
        f.write(weight_bytes(tensors))
    ref = torch.rand(input_shape, generator=gen) * 2 - 1
    with torch.no_grad():
        logits = model(ref.unsqueeze(0))[0]
    rows, _ = layer_shapes(specs, list(input_shape))
    export = {
        "source_model_id": model_id,
        "mapping": mapping,
        "reference": {
            "input_shape": list(input_shape),
            "input": [float(v) for v in ref.flatten()],
            "logits": [float(v) for v in logits],
        },
        "layers": rows,
    }
    with open(os.path.join(out_dir, "export.json"), "w") as f:
        json.dump(export, f)
        f.write("\n")


# ---------------------------------------------------------------- images


def png_bytes(img):
    """img: H×W×3 uint8."""
    h, w, _ = img.shape
    raw = b"".join(b"\x00" + img[y].tobytes() for y in range(h))

    def chunk(kind, data):
        c = struct.pack(">I", len(data)) + kind + data
        return c + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b"")


PATTERNS = ("horizontal stripes", "vertical stripes", "checkerboard")


def pattern(kind, s):
    """s×s ±1 texture with a two-pixel period."""
    yy, xx = np.mgrid[0:s, 0:s]
    return np.where([yy % 2 == 0, xx % 2 == 0, (yy + xx) % 2 == 0][kind], 1.0, -1.0)


def scene(rng, side, objects):
    """Grey noise background with one textured square per pattern index.

    Every texture averages to the background level, so a strong blur leaves
    no trace of which patterns were present. Returns the uint8 image and a
    boolean mask per object."""
    img = np.clip(0.5 + 0.08 * rng.standard_normal((side, side, 1)), 0, 1).repeat(3, axis=2)
    img += 0.02 * rng.standard_normal((side, side, 3))
    masks = []
    taken = np.zeros((side, side), bool)
    for kind in objects:
        for _ in range(100):
            s = int(rng.integers(8, 12))
            y, x = (int(v) for v in rng.integers(0, side - s, size=2))
            if not taken[max(0, y - 1) : y + s + 1, max(0, x - 1) : x + s + 1].any():
                break
        m = np.zeros((side, side), bool)
        m[y : y + s, x : x + s] = True
        taken |= m
        tint = 0.5 + 0.1 * rng.standard_normal(3)
        tex = pattern(kind, s)[..., None] * 0.3
        img[y : y + s, x : x + s] = tint + tex + 0.03 * rng.standard_normal((s, s, 3))
        masks.append(m)
    img = (np.clip(img, 0, 1) * 255).round().astype(np.uint8)
    return img, masks


def to_input(imgs, mean, std):
    x = torch.from_numpy(np.stack(imgs)).float().permute(0, 3, 1, 2) / 255.0
    return (x - torch.tensor(mean).view(1, 3, 1, 1)) / torch.tensor(std).view(1, 3, 1, 1)


def toy_specs(classes):
    return [
        conv(3, 8, 3, pad=1, bias=False),
        BN,
        RELU,
        maxpool(2, 2),
        conv(8, 16, 3, pad=1, bias=False),
        BN,
        RELU,
        maxpool(2, 2),
        conv(16, 16, 3, pad=1),
        RELU,
        GAP,
        dense(16, classes),
    ]


def train(model, x, y, loss_fn, epochs, gen):
    opt = torch.optim.Adam(model.parameters(), lr=0.01)
    n = x.shape[0]
    for _ in range(epochs):
        model.train()
        perm = torch.randperm(n, generator=gen)
        for i in range(0, n, 64):
            idx = perm[i : i + 64]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise RuntimeError("fixture training diverged")
            loss.backward()
            opt.step()
    model.eval()


def write_images(out_dir, imgs, entries):
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    for i, img in enumerate(imgs):
        with open(os.path.join(out_dir, "images", f"img{i:02}.png"), "wb") as f:
            f.write(png_bytes(img))
    manifest = {"images": [dict(path=f"images/img{i:02}.png", **e) for i, e in enumerate(entries)]}
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


PRE = {"height": 32, "width": 32, "mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25], "resize": "bilinear"}


def make_toy_a(out, rng, gen):
    """Two classes: a horizontally or vertically striped square; a
    checkerboard square is always present as a distractor."""
    side = 32

    def sample():
        label = int(rng.integers(0, 2))
        img, _ = scene(rng, side, [label, 2])
        return img, label

    data = [sample() for _ in range(1500)]
    x = to_input([d[0] for d in data], PRE["mean"], PRE["std"])
    y = torch.tensor([d[1] for d in data])
    specs = toy_specs(2)
    model = Seq(specs)
    train(model, x, y, lambda o, t: F.cross_entropy(o, t, label_smoothing=0.1), 8, gen)
    with torch.no_grad():
        acc = (model(x).argmax(1) == y).float().mean().item()
    if acc < 0.95:
        raise RuntimeError(f"toy_a train accuracy {acc:.3f} below 0.95")
    test = [sample() for _ in range(20)]
    write_model(out, "toy_a", model, specs, (3, side, side), 2, PRE, gen)
    write_images(out, [t[0] for t in test], [{"target": t[1], "other_labels": []} for t in test])
    xt = to_input([t[0] for t in test], PRE["mean"], PRE["std"])
    with torch.no_grad():
        test_acc = (model(xt).argmax(1) == torch.tensor([t[1] for t in test])).float().mean().item()
    return {"train_accuracy": acc, "test_accuracy": test_acc}, model, test


def make_toy_b(out, rng, gen):
    """Three labels (the three textures); every image holds two."""
    side = 32

    def sample():
        labels = sorted(int(v) for v in rng.choice(3, size=2, replace=False))
        order = list(labels)
        rng.shuffle(order)
        img, _ = scene(rng, side, order)
        return img, labels

    data = [sample() for _ in range(1500)]
    x = to_input([d[0] for d in data], PRE["mean"], PRE["std"])
    y = torch.zeros(len(data), 3)
    for i, (_, labels) in enumerate(data):
        y[i, labels] = 1.0
    specs = toy_specs(3)
    model = Seq(specs)
    train(model, x, y.clamp(0.05, 0.95), F.binary_cross_entropy_with_logits, 8, gen)
    with torch.no_grad():
        acc = ((model(x) > 0).float() == y).all(1).float().mean().item()
    if acc < 0.95:
        raise RuntimeError(f"toy_b train exact-match accuracy {acc:.3f} below 0.95")
    test = [sample() for _ in range(20)]
    entries = []
    for i, (_, labels) in enumerate(test):
        target = labels[i % 2]
        entries.append({"target": target, "other_labels": [l for l in labels if l != target]})
    write_model(out, "toy_b", model, specs, (3, side, side), 3, PRE, gen)
    write_images(out, [t[0] for t in test], entries)
    return {"train_exact_match": acc}


def randomize_bn(model, gen):
    for m in model.modules():
        if isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
            n = m.num_features
            m.weight.data = 0.5 + torch.rand(n, generator=gen)
            m.bias.data = 0.1 * torch.randn(n, generator=gen)
            m.running_mean.data = 0.1 * torch.randn(n, generator=gen)
            m.running_var.data = 0.5 + torch.rand(n, generator=gen)


def make_vgg(out, gen):
    specs = [
        conv(3, 8, 3, pad=1, bias=False),
        BN,
        RELU,
        conv(8, 8, 3, pad=1, bias=False),
        BN,
        RELU,
        maxpool(2, 2),
        conv(8, 16, 3, pad=1),
        BN,
        RELU,
        maxpool(2, 2),
        FLATTEN,
        dense(16 * 8 * 8, 32),
        RELU,
        dense(32, 10),
    ]
    model = Seq(specs)
    randomize_bn(model, gen)
    write_model(out, "vgg_tiny", model, specs, (3, 32, 32), 10, PRE, gen)


def make_resnet(out, gen):
    specs = [
        conv(3, 8, 3, pad=1, bias=False),
        BN,
        RELU,
        residual([conv(8, 8, 3, pad=1, bias=False), BN, RELU, conv(8, 8, 3, pad=1, bias=False), BN]),
        residual(
            [conv(8, 16, 3, stride=2, pad=1, bias=False), BN, RELU, conv(16, 16, 3, pad=1, bias=False), BN],
            projection=[conv(8, 16, 1, stride=2, bias=False), BN],
        ),
        GAP,
        dense(16, 5),
    ]
    model = Seq(specs)
    randomize_bn(model, gen)
    pre = dict(PRE, height=33, width=33)
    write_model(out, "resnet_tiny", model, specs, (3, 33, 33), 5, pre, gen)


def make_uniform(out, gen):
    """Classifier weights and bias are zero: every logit is 0."""
    specs = toy_specs(4)
    model = Seq(specs)
    with torch.no_grad():
        model.mods["layer11"].weight.zero_()
        model.mods["layer11"].bias.zero_()
    write_model(out, "uniform", model, specs, (3, 32, 32), 4, PRE, gen)


def make_mlp2(out, gen):
    specs = [dense(4, 3), RELU, dense(3, 2)]
    model = Seq(specs)
    write_model(out, "mlp2", model, specs, (4,), 2, None, gen)


def write_golden_grad(out, model, test):
    """Gradient × input of the first toy_a test image, channel-summed."""
    img, label = test[0]
    x = to_input([img], PRE["mean"], PRE["std"]).requires_grad_(True)
    model(x)[0, label].backward()
    m = (x.grad * x).sum(1)[0].detach().numpy().astype("<f4")
    meta = json.dumps({"target": label, "method": "grad", "model_id": "toy_a"}, separators=(",", ":")).encode()
    with open(os.path.join(out, "golden_grad_img00.dmbpa"), "wb") as f:
        f.write(MAGIC_MAP + struct.pack("<II", *m.shape) + m.tobytes() + struct.pack("<H", len(meta)) + meta)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "fixtures"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(args.seed)
    gen = torch.Generator().manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    log = {"seed": args.seed, "torch": torch.__version__}
    log["toy_a"], toy_a, test = make_toy_a(os.path.join(args.out, "toy_a"), rng, gen)
    write_golden_grad(os.path.join(args.out, "toy_a"), toy_a, test)
    log["toy_b"] = make_toy_b(os.path.join(args.out, "toy_b"), rng, gen)
    make_vgg(os.path.join(args.out, "vgg"), gen)
    make_resnet(os.path.join(args.out, "resnet"), gen)
    make_uniform(os.path.join(args.out, "uniform"), gen)
    make_mlp2(os.path.join(args.out, "mlp2"), gen)
    with open(os.path.join(args.out, "generation.json"), "w") as f:
        json.dump(log, f, indent=2)
        f.write("\n")
    print(json.dumps(log, indent=2))


if __name__ == "__main__":
    main()
