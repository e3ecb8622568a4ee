"""Repair pipeline for faulty approximate accelerators.

The sequence: derive the pruned positions from the fault map, zero them,
retrain with those positions pinned, remap the surviving weight codes so
their approximate products track the exact ones, then score inference with
the broken MACs bypassed.
"""

from dataclasses import dataclass, field, replace
import json

import numpy as np

from .faults import FaultMap, SystolicConfig, pruned_mask
from .multipliers import (
    ActivationSample,
    Multiplier,
    WeightMapTable,
    build_weight_map,
    uniform_activations,
)
from .network import ExecEnv, ModelSpec, WeightSet, evaluate
from .quantize import quantize
from .training import HyperParams, retrain_masked


@dataclass
class MitigationReport:
    baseline_acc: float
    faulty_acc_before: float
    acc_after: float
    pruned_per_layer: dict = field(default_factory=dict)
    epochs_used: int = 0
    multiplier_id: str = ""
    fault_summary: str = ""
    acc_thresh: float = 0.0
    reached_thresh: bool = False

    def __post_init__(self):
        for v in (self.baseline_acc, self.faulty_acc_before, self.acc_after):
            if not 0.0 <= v <= 100.0:
                raise ValueError("accuracies must be percents in [0, 100]")

    def to_json(self) -> str:
        doc = {
            "baseline_acc": self.baseline_acc,
            "faulty_acc_before": self.faulty_acc_before,
            "acc_after": self.acc_after,
            "pruned_per_layer": {str(k): int(v) for k, v in self.pruned_per_layer.items()},
            "epochs_used": self.epochs_used,
            "multiplier_id": self.multiplier_id,
            "fault_summary": self.fault_summary,
            "acc_thresh": self.acc_thresh,
            "reached_thresh": self.reached_thresh,
        }
        return json.dumps(doc, indent=1)


def save_report(report: MitigationReport, path) -> None:
    with open(path, "w") as f:
        f.write(report.to_json())
        f.write("\n")


def fault_map_summary(fm: FaultMap) -> str:
    by = {}
    for f in fm.entries.values():
        key = f"{f.kind}@bit{f.bit}"
        by[key] = by.get(key, 0) + 1
    parts = ", ".join(f"{k} x{v}" for k, v in sorted(by.items()))
    return f"{len(fm.entries)} faults on {fm.n}x{fm.n} ({parts})" if by else (
        f"0 faults on {fm.n}x{fm.n}"
    )


def prune_masks(model: ModelSpec, fm: FaultMap) -> dict:
    """Boolean mask per parameter layer, True where the weight would be
    stationed on a faulty MAC. Masks are shaped like the stored weights."""
    masks = {}
    for idx in model.param_layers():
        layer = model.layers[idx]
        flat = pruned_mask(model.gemm_weight_shape(idx), fm)
        if layer.kind == "dense":
            masks[idx] = flat
        else:
            p = layer.params
            masks[idx] = (
                flat.reshape(p["cout"], p["kh"], p["kw"], p["cin"])
                .transpose(1, 2, 3, 0)
            )
    return masks


def apply_masks(weights: WeightSet, masks: dict) -> WeightSet:
    out = weights.deep_copy()
    for idx, m in masks.items():
        out[idx]["W"][m] = 0.0
    return out


def retune_weights(model: ModelSpec, weights: WeightSet, table: WeightMapTable,
                   masks: dict | None = None) -> WeightSet:
    """Push every weight through the substitution table in code space.

    The returned floats are the remapped codes times the original layer
    scale, so a later quantize pass with an unchanged maximum recovers the
    remapped codes bit for bit. The table may move code 0, so pruned
    positions are re-zeroed afterwards.
    """
    out = weights.deep_copy()
    for idx in model.param_layers():
        q = quantize(out[idx]["W"])
        codes = table.remap_codes(q.data)
        w = codes.astype(np.float64) * q.scale
        if masks is not None and idx in masks:
            w[masks[idx]] = 0.0
        out[idx]["W"] = w
    return out


def capture_activations(model: ModelSpec, weights: WeightSet, data,
                        env: ExecEnv, sample_limit=None) -> ActivationSample:
    """Histogram the int8 activation codes of one fault-free pass."""
    counts = np.zeros(256, dtype=np.uint64)
    evaluate(model, weights, data, env=env, sample_limit=sample_limit,
             capture=counts)
    name = getattr(data, "id", "capture")
    return ActivationSample(id=f"capture-{name}", counts=counts)


def run_mitigation(model: ModelSpec, weights: WeightSet, fm: FaultMap,
                   cfg: SystolicConfig, m: Multiplier, train_data, test_data,
                   hp: HyperParams, acc_thresh: float, *,
                   activations="uniform", capture_limit=None,
                   log_path=None):
    """Full repair run; returns (retuned WeightSet, MitigationReport).

    ``activations`` selects the distribution the retuning map is built
    against: "uniform" weighs all codes equally, "empirical" harvests a
    histogram from a fault-free pass over ``train_data`` with the repaired
    weights, or pass an ActivationSample directly.
    """
    if fm.n != cfg.n:
        raise ValueError("fault map and systolic config disagree on n")
    bypass_cfg = replace(cfg, mode="bypass")
    clean_env = ExecEnv(engine="systolic", multiplier=m, systolic=bypass_cfg)
    baseline = evaluate(model, weights, test_data, env=clean_env)
    prop_env = ExecEnv(engine="systolic", multiplier=m,
                       systolic=replace(cfg, mode="propagate"), fault_map=fm)
    faulty_before = evaluate(model, weights, test_data, env=prop_env)

    masks = prune_masks(model, fm)
    pruned = apply_masks(weights, masks)

    history = []
    if hp.epochs > 0:
        retrained = retrain_masked(model, pruned, masks, train_data, hp,
                                   eval_data=test_data, stop_acc=acc_thresh,
                                   history=history, log_path=log_path)
    else:
        retrained = pruned

    if isinstance(activations, ActivationSample):
        acts = activations
    elif activations == "empirical":
        acts = capture_activations(model, retrained, train_data, clean_env,
                                   sample_limit=capture_limit)
    else:
        acts = uniform_activations()
    table = build_weight_map(m, acts)
    retuned = retune_weights(model, retrained, table, masks)

    bypass_env = ExecEnv(engine="systolic", multiplier=m, systolic=bypass_cfg,
                         fault_map=fm)
    acc_after = evaluate(model, retuned, test_data, env=bypass_env)

    report = MitigationReport(
        baseline_acc=baseline,
        faulty_acc_before=faulty_before,
        acc_after=acc_after,
        pruned_per_layer={i: int(mk.sum()) for i, mk in masks.items()},
        epochs_used=len(history),
        multiplier_id=m.id,
        fault_summary=fault_map_summary(fm),
        acc_thresh=acc_thresh,
        reached_thresh=acc_after >= acc_thresh,
    )
    return retuned, report
