"""Plain SGD training for the model zoo, all in numpy float64.

This exists so faulty accelerators can be studied against known-provenance
weights and so mitigation can retrain with pruned positions pinned to zero.
The loss is always softmax cross-entropy on the final layer (a final
``softmax`` or ``none`` activation is folded into the loss for stability;
other final activations are backpropagated through).

Masked retraining follows the per-epoch discipline: all weights move during
an epoch, then masked entries are forced back to exactly zero at the epoch
boundary, and the returned weights always satisfy the mask.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .network import (
    ExecEnv,
    ModelSpec,
    WeightSet,
    _activate,
    _as_xy,
    _to_internal,
    col2im,
    evaluate,
    im2col,
)
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class HyperParams:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    shuffle: bool = True


def init_weights(model: ModelSpec, seed: int) -> WeightSet:
    """Glorot-uniform weights, zero biases, drawn in layer order."""
    rng = np.random.default_rng(seed)
    ws = WeightSet()
    for idx in model.param_layers():
        layer = model.layers[idx]
        p = layer.params
        if layer.kind == "dense":
            fan_in, fan_out = p["in"], p["out"]
            shape = (p["out"], p["in"])
            bshape = (p["out"],)
        else:
            fan_in = p["kh"] * p["kw"] * p["cin"]
            fan_out = p["kh"] * p["kw"] * p["cout"]
            shape = (p["kh"], p["kw"], p["cin"], p["cout"])
            bshape = (p["cout"],)
        a = np.sqrt(6.0 / (fan_in + fan_out))
        ws[idx] = {"W": rng.uniform(-a, a, size=shape), "b": np.zeros(bshape)}
    return ws


def _forward_cached(model: ModelSpec, ws: WeightSet, X):
    caches = []
    for idx, layer in enumerate(model.layers):
        p = layer.params
        c = {"kind": layer.kind, "act": layer.activation}
        if layer.kind == "dense":
            W, b = ws[idx]["W"], ws[idx]["b"]
            Z = W @ X + b[:, None]
            Y = _activate(layer.activation, Z, axis=0)
            c.update(X=X, Z=Z, Y=Y, idx=idx)
            X = Y
        elif layer.kind == "conv2d":
            W, b = ws[idx]["W"], ws[idx]["b"]
            wmat = W.transpose(3, 0, 1, 2).reshape(p["cout"], -1)
            H, Wd, C, B = X.shape
            hout = (H + 2 * p["pad"] - p["kh"]) // p["stride"] + 1
            wout = (Wd + 2 * p["pad"] - p["kw"]) // p["stride"] + 1
            cols = im2col(X, p["kh"], p["kw"], p["stride"], p["pad"])
            Zc = wmat @ cols + b[:, None]
            Z = Zc.reshape(p["cout"], hout, wout, B).transpose(1, 2, 0, 3)
            Y = _activate(layer.activation, Z, axis=2)
            c.update(x_shape=X.shape, cols=cols, wmat=wmat, Z=Z, Y=Y, idx=idx,
                     geom=(hout, wout, B))
            X = Y
        elif layer.kind == "maxpool":
            k, s = p["k"], p["stride"]
            win = sliding_window_view(X, (k, k), axis=(0, 1))[::s, ::s]
            flat = win.reshape(*win.shape[:4], k * k)
            arg = flat.argmax(axis=-1)
            Y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
            c.update(x_shape=X.shape, arg=arg, idx=idx)
            X = Y
        else:
            c.update(x_shape=X.shape, idx=idx)
            X = X.reshape(-1, X.shape[-1])
        caches.append(c)
    return X, caches


def _softmax_ce(S, labels):
    """Loss and dL/dS for scores S (classes, B)."""
    m = S.max(axis=0)
    Z = np.exp(S - m)
    denom = Z.sum(axis=0)
    batch = S.shape[1]
    cols = np.arange(batch)
    loss = float(np.mean(np.log(denom) + m - S[labels, cols]))
    probs = Z / denom
    dS = probs
    dS[labels, cols] -= 1.0
    return loss, dS / batch


def _act_backward(act: str, cache, dY, axis: int):
    if act == "none":
        return dY
    if act == "relu":
        return dY * (cache["Z"] > 0)
    if act == "tanh":
        return dY * (1.0 - cache["Y"] ** 2)
    if act == "softmax":
        Y = cache["Y"]
        return Y * (dY - np.sum(dY * Y, axis=axis, keepdims=True))
    raise ValueError(act)


def _loss_and_grads(model: ModelSpec, ws: WeightSet, xb, yb):
    X, _ = _to_internal(model, xb)
    labels = np.asarray(yb, dtype=np.int64)
    out, caches = _forward_cached(model, ws, X)

    last = caches[-1]
    fold = last["kind"] == "dense" and last["act"] in ("none", "softmax")
    scores = last["Z"] if fold else out
    loss, dS = _softmax_ce(scores, labels)

    grads = {}
    d = dS
    for c in reversed(caches):
        kind = c["kind"]
        if kind == "dense":
            dZ = d if (fold and c is last) else _act_backward(c["act"], c, d, axis=0)
            W = ws[c["idx"]]["W"]
            grads[c["idx"]] = {"W": dZ @ c["X"].T, "b": dZ.sum(axis=1)}
            d = W.T @ dZ
        elif kind == "conv2d":
            dZ = _act_backward(c["act"], c, d, axis=2)
            hout, wout, B = c["geom"]
            p = model.layers[c["idx"]].params
            dZc = dZ.transpose(2, 0, 1, 3).reshape(p["cout"], hout * wout * B)
            dWmat = dZc @ c["cols"].T
            dW = dWmat.reshape(p["cout"], p["kh"], p["kw"], p["cin"]).transpose(1, 2, 3, 0)
            grads[c["idx"]] = {"W": dW, "b": dZc.sum(axis=1)}
            dcols = c["wmat"].T @ dZc
            d = col2im(dcols, c["x_shape"], p["kh"], p["kw"], p["stride"], p["pad"])
        elif kind == "maxpool":
            p = model.layers[c["idx"]].params
            k, s = p["k"], p["stride"]
            arg = c["arg"]
            hout, wout, C, B = arg.shape
            u, v = arg // k, arg % k
            oh = np.arange(hout)[:, None, None, None] * s + u
            ow = np.arange(wout)[None, :, None, None] * s + v
            ci = np.broadcast_to(np.arange(C)[None, None, :, None], arg.shape)
            bi = np.broadcast_to(np.arange(B)[None, None, None, :], arg.shape)
            dx = np.zeros(c["x_shape"])
            np.add.at(dx, (oh, ow, ci, bi), d)
            d = dx
        else:
            d = d.reshape(c["x_shape"])
    return loss, grads


def _loss_only(model, ws, xb, yb):
    X, _ = _to_internal(model, xb)
    labels = np.asarray(yb, dtype=np.int64)
    out, caches = _forward_cached(model, ws, X)
    last = caches[-1]
    fold = last["kind"] == "dense" and last["act"] in ("none", "softmax")
    scores = last["Z"] if fold else out
    loss, _ = _softmax_ce(scores, labels)
    return loss


def _zero_like(ws: WeightSet):
    return {i: {k: np.zeros_like(v) for k, v in t.items()} for i, t in ws.items()}


def _sgd_step(ws, vel, grads, hp: HyperParams):
    for idx, g in grads.items():
        for key in ("W", "b"):
            v = vel[idx][key]
            v *= hp.momentum
            v -= hp.lr * g[key]
            ws[idx][key] += v


def _apply_mask(ws: WeightSet, mask) -> None:
    for idx, m in mask.items():
        ws[idx]["W"][m] = 0.0


def train(model: ModelSpec, data, hp: HyperParams, *, start_weights=None,
          mask=None, eval_data=None, stop_acc=None, log_path=None,
          history=None) -> WeightSet:
    """Minibatch SGD with momentum; returns the trained WeightSet.

    ``mask`` (layer index -> bool array over W) pins entries to zero at
    every epoch boundary. ``stop_acc`` stops early once float-engine
    accuracy on ``eval_data`` reaches the threshold. ``history``, when a
    list is passed, collects one dict per completed epoch.
    """
    images, labels = _as_xy(data)
    n = len(images)
    if n == 0:
        raise ValueError("empty training set")
    ws = start_weights.deep_copy() if start_weights is not None else init_weights(model, hp.seed)
    if mask:
        _apply_mask(ws, mask)
    vel = _zero_like(ws)
    shuffle_rng = np.random.default_rng([hp.seed, 0xA5])
    rows = []
    for epoch in range(1, hp.epochs + 1):
        order = shuffle_rng.permutation(n) if hp.shuffle else np.arange(n)
        total = 0.0
        for i0 in range(0, n, hp.batch_size):
            sel = order[i0 : i0 + hp.batch_size]
            loss, grads = _loss_and_grads(model, ws, images[sel], labels[sel])
            total += loss * len(sel)
            _sgd_step(ws, vel, grads, hp)
        if mask:
            _apply_mask(ws, mask)
        row = {"epoch": epoch, "loss": total / n}
        if eval_data is not None:
            row["eval_acc"] = evaluate(model, ws, eval_data, ExecEnv())
        rows.append(row)
        if history is not None:
            history.append(dict(row))
        if stop_acc is not None and row.get("eval_acc", -1.0) >= stop_acc:
            break
    if log_path:
        with open(log_path, "w", newline="") as f:
            wtr = csv.writer(f)
            wtr.writerow(["epoch", "loss", "eval_acc"])
            for r in rows:
                wtr.writerow([r["epoch"], f"{r['loss']:.6f}",
                              "" if "eval_acc" not in r else f"{r['eval_acc']:.4f}"])
    return ws


def retrain_masked(model: ModelSpec, weights: WeightSet, mask, data,
                   hp: HyperParams, **kwargs) -> WeightSet:
    """Resume training with pruned positions pinned to zero.

    With an empty mask this is exactly ``train`` resumed from ``weights``.
    """
    return train(model, data, hp, start_weights=weights, mask=mask, **kwargs)


def grad_check(model: ModelSpec, weights: WeightSet, sample, n_checks: int = 200,
               h: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Checks up to ``n_checks`` randomly chosen parameters on one sample.
    """
    x, y = sample
    xb = np.asarray(x)[None]
    yb = np.asarray([y])
    _, grads = _loss_and_grads(model, weights, xb, yb)

    slots = []
    for idx in sorted(weights):
        for key in ("W", "b"):
            slots.append((idx, key, weights[idx][key].size))
    total = sum(s for _, _, s in slots)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_checks, total), replace=False)

    ws = weights.deep_copy()
    worst = 0.0
    for flat in np.sort(picks):
        off = int(flat)
        for idx, key, size in slots:
            if off < size:
                break
            off -= size
        t = ws[idx][key].reshape(-1)
        keep = t[off]
        t[off] = keep + h
        lp = _loss_only(model, ws, xb, yb)
        t[off] = keep - h
        lm = _loss_only(model, ws, xb, yb)
        t[off] = keep
        numeric = (lp - lm) / (2.0 * h)
        analytic = grads[idx][key].reshape(-1)[off]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, rel)
    return worst
