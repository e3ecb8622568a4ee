"""Small dense/conv networks with swappable execution engines.

A model is a list of layer specs (dense, conv2d, maxpool, flatten) plus an
input shape. Weights live in float64; the quantized engines round-trip each
GEMM through symmetric int8 quantization, run the integer multiply-accumulate
on a simulated accelerator (weight-stationary systolic array or tiled GPU
path), and requantize back to float, so non-GEMM layers always see float
activations.

Internal layouts are feature-major: dense activations are (features, batch),
conv activations are (H, W, C, batch). Convolutions are lowered to the same
GEMM path via im2col, which is what physically happens on the modeled
accelerators.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .faults import FaultMap, SystolicConfig, TileFaultSpec, gpu_tile_gemm, systolic_gemm
from .multipliers import Multiplier, WeightMapTable
from .quantize import quantize, requantize_accum

LAYER_KINDS = ("dense", "conv2d", "maxpool", "flatten")
ACTIVATIONS = ("none", "relu", "tanh", "softmax")
ENGINES = ("float", "systolic", "gpu_tiles")


@dataclass
class LayerSpec:
    kind: str
    activation: str = "none"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def dense(in_dim: int, out_dim: int, activation: str = "none") -> LayerSpec:
    return LayerSpec("dense", activation, {"in": int(in_dim), "out": int(out_dim)})


def conv2d(kh, kw, cin, cout, stride=1, pad=0, activation="none") -> LayerSpec:
    return LayerSpec(
        "conv2d",
        activation,
        {"kh": int(kh), "kw": int(kw), "cin": int(cin), "cout": int(cout),
         "stride": int(stride), "pad": int(pad)},
    )


def maxpool(k: int, stride: int | None = None) -> LayerSpec:
    return LayerSpec("maxpool", "none", {"k": int(k), "stride": int(stride or k)})


def flatten() -> LayerSpec:
    return LayerSpec("flatten", "none", {})


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple
    layers: list

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if len(self.input_shape) not in (1, 3):
            raise ValueError("input shape must be (features,) or (H, W, C)")

    def shapes(self) -> list:
        """Per-layer output shapes; raises on any inconsistency."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            p = layer.params
            if layer.kind == "dense":
                if len(shape) != 1 or shape[0] != p["in"]:
                    raise ValueError(
                        f"layer {i}: dense expects ({p['in']},), got {shape}"
                    )
                shape = (p["out"],)
            elif layer.kind == "conv2d":
                if len(shape) != 3 or shape[2] != p["cin"]:
                    raise ValueError(f"layer {i}: conv2d input mismatch at {shape}")
                h = (shape[0] + 2 * p["pad"] - p["kh"]) // p["stride"] + 1
                w = (shape[1] + 2 * p["pad"] - p["kw"]) // p["stride"] + 1
                if h <= 0 or w <= 0:
                    raise ValueError(f"layer {i}: conv2d output collapses to {h}x{w}")
                shape = (h, w, p["cout"])
            elif layer.kind == "maxpool":
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: maxpool needs a conv-shaped input")
                h = (shape[0] - p["k"]) // p["stride"] + 1
                w = (shape[1] - p["k"]) // p["stride"] + 1
                if h <= 0 or w <= 0:
                    raise ValueError(f"layer {i}: maxpool output collapses")
                shape = (h, w, shape[2])
            else:
                shape = (int(np.prod(shape)),)
            if layer.kind in ("maxpool", "flatten") and layer.activation != "none":
                raise ValueError(f"layer {i}: {layer.kind} cannot carry an activation")
            out.append(shape)
        if len(out[-1]) != 1:
            raise ValueError("model must end in a 1-d output layer")
        return out

    @property
    def n_classes(self) -> int:
        return self.shapes()[-1][0]

    def param_layers(self) -> list:
        return [i for i, l in enumerate(self.layers) if l.kind in ("dense", "conv2d")]

    def gemm_weight_shape(self, idx: int) -> tuple:
        """Shape of the weight matrix this layer presents to the GEMM engine."""
        layer = self.layers[idx]
        p = layer.params
        if layer.kind == "dense":
            return (p["out"], p["in"])
        if layer.kind == "conv2d":
            return (p["cout"], p["kh"] * p["kw"] * p["cin"])
        raise ValueError(f"layer {idx} has no weights")


class WeightSet(dict):
    """layer_index -> {"W": ndarray, "b": ndarray} for parameterized layers."""

    def deep_copy(self) -> "WeightSet":
        return WeightSet(
            {i: {k: v.copy() for k, v in t.items()} for i, t in self.items()}
        )

    def param_count(self) -> int:
        return int(sum(t["W"].size + t["b"].size for t in self.values()))


# ---------------------------------------------------------------------------
# model serialization (structured text) and weight files (binary)


def model_to_json(model: ModelSpec) -> str:
    layers = []
    for l in model.layers:
        d = {"kind": l.kind, "activation": l.activation}
        d.update(l.params)
        layers.append(d)
    doc = {"name": model.name, "input_shape": list(model.input_shape), "layers": layers}
    return json.dumps(doc, indent=1)


def model_from_json(text: str) -> ModelSpec:
    doc = json.loads(text)
    layers = []
    for d in doc["layers"]:
        d = dict(d)
        kind = d.pop("kind")
        act = d.pop("activation", "none")
        layers.append(LayerSpec(kind, act, d))
    model = ModelSpec(doc["name"], tuple(doc["input_shape"]), layers)
    model.shapes()
    return model


def save_model(model: ModelSpec, path) -> None:
    with open(path, "w") as f:
        f.write(model_to_json(model) + "\n")


def load_model(path) -> ModelSpec:
    with open(path) as f:
        return model_from_json(f.read())


WEIGHTS_MAGIC = b"AXDN"
WEIGHTS_VERSION = 1


def save_weights(ws: WeightSet, model: ModelSpec, path) -> None:
    """Binary container: magic 'AXDN', u16 version, u16 tensor count, then
    per tensor four u32 little-endian dims (trailing dims padded with 1)
    followed by the row-major float32 payload."""
    tensors = []
    for idx in model.param_layers():
        tensors.append(ws[idx]["W"])
        tensors.append(ws[idx]["b"])
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<HH", WEIGHTS_VERSION, len(tensors)))
        for t in tensors:
            if t.ndim > 4:
                raise ValueError("tensors above rank 4 are not supported")
            dims = list(t.shape) + [1] * (4 - t.ndim)
            f.write(struct.pack("<4I", *dims))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(model: ModelSpec, path) -> WeightSet:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise ValueError("bad weights file magic")
    version, count = struct.unpack_from("<HH", data, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {version}")
    pidx = model.param_layers()
    if count != 2 * len(pidx):
        raise ValueError(f"weights file has {count} tensors, model needs {2 * len(pidx)}")
    off = 8
    ws = WeightSet()
    for idx in pidx:
        pair = {}
        for key in ("W", "b"):
            dims = struct.unpack_from("<4I", data, off)
            off += 16
            size = int(np.prod(dims))
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).astype(np.float64)
            off += 4 * size
            expect = _expected_tensor_shape(model.layers[idx], key)
            if size != int(np.prod(expect)):
                raise ValueError(f"layer {idx} tensor {key} has wrong size")
            pair[key] = arr.reshape(expect)
        ws[idx] = pair
    if off != len(data):
        raise ValueError("trailing bytes in weights file")
    return ws


def _expected_tensor_shape(layer: LayerSpec, key: str) -> tuple:
    p = layer.params
    if layer.kind == "dense":
        return (p["out"], p["in"]) if key == "W" else (p["out"],)
    if layer.kind == "conv2d":
        return (p["kh"], p["kw"], p["cin"], p["cout"]) if key == "W" else (p["cout"],)
    raise ValueError("layer has no tensors")


# ---------------------------------------------------------------------------
# desk-scale model zoo


def desk_model(model_id: str) -> ModelSpec:
    if model_id == "mp-tanh-desk":
        return ModelSpec(model_id, (784,), [
            dense(784, 64, "tanh"),
            dense(64, 32, "tanh"),
            dense(32, 10, "none"),
        ])
    if model_id == "mp-softmax-desk":
        return ModelSpec(model_id, (784,), [
            dense(784, 64, "softmax"),
            dense(64, 32, "softmax"),
            dense(32, 10, "none"),
        ])
    if model_id == "lenet-desk":
        return ModelSpec(model_id, (28, 28, 1), [
            conv2d(5, 5, 1, 8, activation="relu"),
            maxpool(2),
            conv2d(5, 5, 8, 16, activation="relu"),
            maxpool(2),
            flatten(),
            dense(256, 64, "relu"),
            dense(64, 10, "none"),
        ])
    raise ValueError(f"unknown model id {model_id!r}")


def resolve_model(name_or_path: str) -> ModelSpec:
    try:
        return desk_model(name_or_path)
    except ValueError:
        return load_model(name_or_path)


# ---------------------------------------------------------------------------
# lowering helpers


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """(H, W, C, B) -> (kh*kw*C, Hout*Wout*B), row index ordered (u, v, c).

    Works on any dtype; padding inserts zeros (which is also the zero code
    of the symmetric quantizer, so the int8 path pads exactly).
    """
    H, W, C, B = x.shape
    if pad:
        xp = np.zeros((H + 2 * pad, W + 2 * pad, C, B), dtype=x.dtype)
        xp[pad : pad + H, pad : pad + W] = x
    else:
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::stride, ::stride]
    # (Hout, Wout, C, B, kh, kw) -> (kh, kw, C, Hout, Wout, B)
    cols = win.transpose(4, 5, 2, 0, 1, 3)
    hout, wout = win.shape[0], win.shape[1]
    return np.ascontiguousarray(cols).reshape(kh * kw * C, hout * wout * B)


def col2im(cols: np.ndarray, x_shape, kh, kw, stride=1, pad=0) -> np.ndarray:
    """Scatter-add inverse of im2col, for the conv backward pass."""
    H, W, C, B = x_shape
    hout = (H + 2 * pad - kh) // stride + 1
    wout = (W + 2 * pad - kw) // stride + 1
    grid = cols.reshape(kh, kw, C, hout, wout, B)
    xp = np.zeros((H + 2 * pad, W + 2 * pad, C, B), dtype=cols.dtype)
    for u in range(kh):
        for v in range(kw):
            xp[u : u + hout * stride : stride, v : v + wout * stride : stride] += (
                grid[u, v].transpose(1, 2, 0, 3)
            )
    if pad:
        return xp[pad : pad + H, pad : pad + W]
    return xp


def conv2d_direct(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride=1, pad=0) -> np.ndarray:
    """Nested-loop reference convolution, (H, W, C, B) float in/out.

    Deliberately naive; exists as an independent check of the im2col path.
    """
    H, W, C, B = x.shape
    kh, kw, cin, cout = w.shape
    assert cin == C
    if pad:
        xp = np.zeros((H + 2 * pad, W + 2 * pad, C, B))
        xp[pad : pad + H, pad : pad + W] = x
    else:
        xp = x
    hout = (H + 2 * pad - kh) // stride + 1
    wout = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((hout, wout, cout, B))
    for oh in range(hout):
        for ow in range(wout):
            patch = xp[oh * stride : oh * stride + kh, ow * stride : ow * stride + kw]
            for co in range(cout):
                out[oh, ow, co] = np.sum(
                    patch * w[:, :, :, co, None], axis=(0, 1, 2)
                ) + b[co]
    return out


def _activate(name: str, z: np.ndarray, axis: int) -> np.ndarray:
    if name == "none":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        zs = z - z.max(axis=axis, keepdims=True)
        e = np.exp(zs)
        return e / e.sum(axis=axis, keepdims=True)
    raise ValueError(name)


# ---------------------------------------------------------------------------
# execution environments and the forward pass


@dataclass
class ExecEnv:
    """How to execute the GEMMs of a forward pass.

    ``layer_filter`` restricts fault injection to one layer index (0-based);
    the multiplier itself and any ``weight_map`` retuning always apply to
    every GEMM layer. For the gpu_tiles engine, ``tile_fault.tile_index`` is
    validated against each layer's block grid by reducing it modulo the
    number of blocks, so one spec can damage a block in every layer.
    """

    engine: str = "float"
    multiplier: Multiplier | None = None
    systolic: SystolicConfig | None = None
    fault_map: FaultMap | None = None
    tile: int = 16
    tile_fault: TileFaultSpec | None = None
    layer_filter: int | None = None
    weight_map: WeightMapTable | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.engine in ("systolic", "gpu_tiles") and self.multiplier is None:
            raise ValueError("quantized engines need a multiplier")
        if self.engine == "systolic" and self.systolic is None:
            raise ValueError("systolic engine needs a SystolicConfig")


def _engine_gemm(env: ExecEnv, wcodes, acodes, layer_idx: int):
    admitted = env.layer_filter is None or env.layer_filter == layer_idx
    if env.engine == "systolic":
        fm = env.fault_map if admitted else None
        return systolic_gemm(wcodes, acodes, env.multiplier, fm, env.systolic)
    tf = env.tile_fault if admitted else None
    if tf is not None:
        rows, batch = wcodes.shape[0], acodes.shape[1]
        nblocks = (-(-rows // env.tile)) * (-(-batch // env.tile))
        tf = replace(tf, tile_index=tf.tile_index % nblocks)
    return gpu_tile_gemm(wcodes, acodes, env.multiplier, tf, env.tile)


def _gemm_layer(env: ExecEnv, W2d, acts2d, bias_col, layer_idx, capture):
    """Shared dense/conv GEMM: quantize, run the engine, requantize."""
    qa = quantize(acts2d)
    qw = quantize(W2d)
    wcodes = qw.data
    if env.weight_map is not None:
        wcodes = env.weight_map.remap_codes(wcodes)
    if capture is not None:
        capture += np.bincount(
            qa.data.reshape(-1).astype(np.int32) + 128, minlength=256
        ).astype(np.uint64)
    acc = _engine_gemm(env, wcodes, qa.data, layer_idx)
    return requantize_accum(acc, qw.scale, qa.scale) + bias_col


def _to_internal(model: ModelSpec, x):
    x = np.asarray(x, dtype=np.float64)
    ishape = model.input_shape
    single = x.shape == ishape or (
        x.ndim == 1 and int(np.prod(ishape)) == x.size
    )
    if single:
        x = x[None]
    if x.shape[1:] != ishape:
        if int(np.prod(x.shape[1:])) != int(np.prod(ishape)):
            raise ValueError(f"input shape {x.shape[1:]} does not match {ishape}")
        x = x.reshape(x.shape[0], *ishape)
    if len(ishape) == 1:
        return x.T, single
    return x.transpose(1, 2, 3, 0), single


def run_layers(model: ModelSpec, weights: WeightSet, X, env: ExecEnv, capture=None):
    """Drive the layer stack on feature-major activations X."""
    quant = env.engine != "float"
    for idx, layer in enumerate(model.layers):
        p = layer.params
        if layer.kind == "dense":
            W, b = weights[idx]["W"], weights[idx]["b"]
            if quant:
                Z = _gemm_layer(env, W, X, b[:, None], idx, capture)
            else:
                Z = W @ X + b[:, None]
            X = _activate(layer.activation, Z, axis=0)
        elif layer.kind == "conv2d":
            W, b = weights[idx]["W"], weights[idx]["b"]
            wmat = W.transpose(3, 0, 1, 2).reshape(p["cout"], -1)
            H, Wd, C, B = X.shape
            hout = (H + 2 * p["pad"] - p["kh"]) // p["stride"] + 1
            wout = (Wd + 2 * p["pad"] - p["kw"]) // p["stride"] + 1
            if quant:
                # quantize the activation tensor once, then lower the int8
                # codes; zero padding is exact in code space
                qx = quantize(X)
                cols = im2col(qx.data, p["kh"], p["kw"], p["stride"], p["pad"])
                qw = quantize(wmat)
                wcodes = qw.data
                if env.weight_map is not None:
                    wcodes = env.weight_map.remap_codes(wcodes)
                if capture is not None:
                    capture += np.bincount(
                        cols.reshape(-1).astype(np.int32) + 128, minlength=256
                    ).astype(np.uint64)
                acc = _engine_gemm(env, wcodes, cols, idx)
                Z = requantize_accum(acc, qw.scale, qx.scale) + b[:, None]
            else:
                cols = im2col(X, p["kh"], p["kw"], p["stride"], p["pad"])
                Z = wmat @ cols + b[:, None]
            Z = Z.reshape(p["cout"], hout, wout, B).transpose(1, 2, 0, 3)
            X = _activate(layer.activation, Z, axis=2)
        elif layer.kind == "maxpool":
            k, s = p["k"], p["stride"]
            win = sliding_window_view(X, (k, k), axis=(0, 1))[::s, ::s]
            X = win.max(axis=(-2, -1))
        else:  # flatten
            H, Wd, C, B = X.shape
            X = X.reshape(H * Wd * C, B)
    return X


def forward(model: ModelSpec, weights: WeightSet, x, env: ExecEnv | None = None,
            capture=None) -> dict:
    """Run one input or a batch; returns {"logits": ..., "class": ...}.

    Batch input (B, *input_shape) gives logits (B, n_classes) and class
    (B,); a single input collapses both.
    """
    env = env or ExecEnv()
    X, single = _to_internal(model, x)
    out = run_layers(model, weights, X, env, capture=capture)
    logits = out.T
    cls = np.argmax(logits, axis=1)
    if single:
        return {"logits": logits[0], "class": int(cls[0])}
    return {"logits": logits, "class": cls}


def _as_xy(data):
    if isinstance(data, tuple):
        return np.asarray(data[0]), np.asarray(data[1])
    return np.asarray(data.images), np.asarray(data.labels)


def evaluate(model: ModelSpec, weights: WeightSet, data, env: ExecEnv | None = None,
             sample_limit: int | None = None, batch_size: int = 256,
             capture=None) -> float:
    """Top-1 accuracy in percent over (a prefix of) the dataset."""
    env = env or ExecEnv()
    images, labels = _as_xy(data)
    if sample_limit is not None:
        images, labels = images[:sample_limit], labels[:sample_limit]
    hits = 0
    for i in range(0, len(images), batch_size):
        r = forward(model, weights, images[i : i + batch_size], env, capture=capture)
        hits += int(np.sum(r["class"] == labels[i : i + batch_size]))
    return 100.0 * hits / len(images)


def accuracy_loss(baseline_percent: float, other_percent: float) -> float:
    return baseline_percent - other_percent
