"""Command-line front end.

Every subcommand is batch-oriented and bit-reproducible: all randomness
flows through --seed (default taken from $AXFAULT_SEED, then 0), and
failures exit nonzero with a single "error: ..." line on stderr.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import campaign as camp
from . import datasets, mitigation, multipliers, network, training
from .faults import (
    FaultMap,
    StuckAtFault,
    SystolicConfig,
    TileFaultSpec,
    load_fault_map,
    random_fault_map,
    save_fault_map,
)


def _default_seed() -> int:
    try:
        return int(os.environ.get("AXFAULT_SEED", "0"))
    except ValueError:
        return 0


def _load_model(arg: str) -> network.ModelSpec:
    return network.resolve_model(arg)


def _multiplier_for(args) -> multipliers.Multiplier:
    if getattr(args, "family", None):
        return multipliers.parse_multiplier(f"{args.family}-{args.k}"
                                            if args.family != "exact"
                                            else "exact")
    return multipliers.parse_multiplier(args.multiplier)


def _hp_from(args) -> training.HyperParams:
    return training.HyperParams(
        lr=args.lr, momentum=args.momentum, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed,
    )


def _add_hp_flags(p, epochs=10):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)


def _add_seed(p):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="PRNG seed (default $AXFAULT_SEED or 0)")


def _eval_env(args, m) -> network.ExecEnv:
    if args.engine == "float":
        return network.ExecEnv()
    fm = load_fault_map(args.fault_map) if args.fault_map else None
    wm = None
    if args.weight_map:
        wm = multipliers.load_weight_map(args.weight_map)
    if args.engine == "systolic":
        return network.ExecEnv(
            engine="systolic", multiplier=m,
            systolic=SystolicConfig(n=args.n, mode=args.mode),
            fault_map=fm, layer_filter=args.layer, weight_map=wm,
        )
    tf = None
    if args.tile_fraction > 0:
        tf = TileFaultSpec(tile_index=args.tile_index,
                           damaged_fraction=args.tile_fraction,
                           fault=StuckAtFault(args.bit, args.kind),
                           seed=args.seed)
    return network.ExecEnv(engine="gpu_tiles", multiplier=m, tile=args.tile,
                           tile_fault=tf, layer_filter=args.layer,
                           weight_map=wm)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_train(args) -> int:
    model = _load_model(args.model)
    data = datasets.parse_dataset_arg(args.data)
    eval_data = datasets.parse_dataset_arg(args.eval_data) if args.eval_data else None
    hp = _hp_from(args)
    history = []
    w = training.train(model, data, hp, eval_data=eval_data,
                       stop_acc=args.stop_acc, log_path=args.log,
                       history=history)
    network.save_weights(w, model, args.out)
    acc_data = eval_data if eval_data is not None else data
    acc = network.evaluate(model, w, acc_data)
    print(f"epochs={len(history)}")
    print(f"accuracy={acc:.2f}")
    print(f"weights={args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = _load_model(args.model)
    w = network.load_weights(model, args.weights)
    data = datasets.parse_dataset_arg(args.data)
    m = None
    if args.engine != "float":
        m = multipliers.parse_multiplier(args.multiplier)
    acc = network.evaluate(model, w, data, env=_eval_env(args, m),
                           sample_limit=args.sample_limit)
    print(f"accuracy={acc:.2f}")
    return 0


def _cmd_mul_info(args) -> int:
    m = _multiplier_for(args)
    em = multipliers.error_metrics(m)
    print(f"id={m.id}")
    print(f"mae_percent={em.mae_percent}")
    print(f"worst_case_abs={em.worst_case_abs}")
    print(f"error_count={em.error_count}")
    return 0


def _cmd_mul_gen_lut(args) -> int:
    m = _multiplier_for(args)
    multipliers.save_lut(m, args.out)
    print(f"lut={args.out}")
    return 0


def _cmd_mul_map(args) -> int:
    m = _multiplier_for(args)
    table = multipliers.build_weight_map(m, multipliers.uniform_activations())
    multipliers.save_weight_map(table, args.out)
    moved = int(np.sum(table.map != np.arange(-128, 128)))
    print(f"map={args.out}")
    print(f"remapped_codes={moved}")
    return 0


def _cmd_inject(args) -> int:
    model = _load_model(args.model)
    w = network.load_weights(model, args.weights)
    data = datasets.parse_dataset_arg(args.data)
    m = multipliers.parse_multiplier(args.multiplier)
    fault = StuckAtFault(args.bit, args.kind)
    if args.engine == "systolic":
        fm = random_fault_map(args.n, args.percent, fault, seed=args.seed)
        if args.save_map:
            save_fault_map(fm, args.save_map)
        base_env = network.ExecEnv(engine="systolic", multiplier=m,
                                   systolic=SystolicConfig(n=args.n))
        env = network.ExecEnv(engine="systolic", multiplier=m,
                              systolic=SystolicConfig(n=args.n, mode=args.mode),
                              fault_map=fm, layer_filter=args.layer)
    else:
        base_env = network.ExecEnv(engine="gpu_tiles", multiplier=m,
                                   tile=args.tile)
        tf = None
        if args.percent > 0:
            tf = TileFaultSpec(tile_index=args.tile_index,
                               damaged_fraction=args.percent / 100.0,
                               fault=fault, seed=args.seed)
        env = network.ExecEnv(engine="gpu_tiles", multiplier=m, tile=args.tile,
                              tile_fault=tf, layer_filter=args.layer)
    baseline = network.evaluate(model, w, data, env=base_env,
                                sample_limit=args.sample_limit)
    faulty = network.evaluate(model, w, data, env=env,
                              sample_limit=args.sample_limit)
    print(f"baseline_acc={baseline:.2f}")
    print(f"faulty_acc={faulty:.2f}")
    print(f"acc_loss={baseline - faulty:.2f}")
    return 0


def _cmd_mitigate(args) -> int:
    model = _load_model(args.model)
    w = network.load_weights(model, args.weights)
    train_data = datasets.parse_dataset_arg(args.data)
    test_data = datasets.parse_dataset_arg(args.test_data)
    m = multipliers.parse_multiplier(args.multiplier)
    if args.fault_map:
        fm = load_fault_map(args.fault_map)
    else:
        fm = random_fault_map(args.n, args.percent,
                              StuckAtFault(args.bit, args.kind),
                              seed=args.seed)
    hp = _hp_from(args)
    retuned, report = mitigation.run_mitigation(
        model, w, fm, SystolicConfig(n=fm.n), m, train_data, test_data, hp,
        args.acc_thresh, activations=args.activations,
    )
    network.save_weights(retuned, model, args.out)
    if args.report:
        mitigation.save_report(report, args.report)
    print(f"baseline_acc={report.baseline_acc:.2f}")
    print(f"faulty_acc_before={report.faulty_acc_before:.2f}")
    print(f"acc_after={report.acc_after:.2f}")
    print(f"epochs_used={report.epochs_used}")
    print(f"weights={args.out}")
    return 0


def _energy_table(arg):
    if not arg:
        return None
    if arg == "illustrative":
        return camp.ILLUSTRATIVE_ENERGY_PJ
    with open(arg) as f:
        return json.load(f)


def _cmd_campaign_run(args) -> int:
    with open(args.spec) as f:
        spec = camp.CampaignSpec.from_json(f.read())
    model = _load_model(spec.model_id)
    w = network.load_weights(model, args.weights)
    test_data = datasets.parse_dataset_arg(spec.dataset_id)
    train_data = (datasets.parse_dataset_arg(args.train_data)
                  if args.train_data else None)
    records = camp.run_campaign(
        spec, model, w, test_data, train_data=train_data,
        energy_table=_energy_table(args.energy), workers=args.workers,
        include_timing=args.timing,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "records.json")
    camp.save_records(records, path)
    failed = sum(1 for r in records if r.error is not None)
    print(f"records={len(records)}")
    print(f"failed={failed}")
    print(f"out={path}")
    return 0


def _cmd_campaign_report(args) -> int:
    records = camp.load_records(args.records)
    written = camp.emit_report(records, args.out,
                               energy_table=_energy_table(args.energy))
    for p in written:
        print(p)
    return 0


def _cmd_dataset_convert(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.cifar:
        ds = datasets.load_cifar10_batches(args.cifar.split(","), "cifar10")
    else:
        ds = datasets.load_idx_pair(args.images, args.labels, "converted")
    img_name = f"{args.split}-images-idx.bin"
    lab_name = f"{args.split}-labels-idx.bin"
    raw = np.round(ds.images * 255.0).astype(np.uint8)
    datasets.save_idx(raw, os.path.join(args.out, img_name))
    datasets.save_idx(ds.labels.astype(np.uint8),
                      os.path.join(args.out, lab_name))
    meta_path = os.path.join(args.out, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as f:
            meta = json.load(f)
    meta[args.split] = {"images": img_name, "labels": lab_name,
                        "count": len(ds.images), "classes": ds.n_classes}
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")
    print(f"count={len(ds.images)}")
    print(f"out={args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="axfault",
        description="Fault injection and repair for int8 networks on "
                    "approximate-multiplier accelerators.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save weights")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data")
    p.add_argument("--out", required=True)
    p.add_argument("--stop-acc", type=float)
    p.add_argument("--log")
    _add_hp_flags(p)
    _add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="accuracy of saved weights on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--engine", choices=["float", "systolic", "gpu_tiles"],
                   default="float")
    p.add_argument("--multiplier", default="exact")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--mode", choices=["propagate", "bypass"],
                   default="propagate")
    p.add_argument("--tile", type=int, default=16)
    p.add_argument("--tile-index", type=int, default=0)
    p.add_argument("--tile-fraction", type=float, default=0.0)
    p.add_argument("--bit", type=int, default=15)
    p.add_argument("--kind", choices=["sa0", "sa1"], default="sa1")
    p.add_argument("--fault-map")
    p.add_argument("--weight-map")
    p.add_argument("--layer", type=int)
    p.add_argument("--sample-limit", type=int)
    _add_seed(p)
    p.set_defaults(func=_cmd_eval)

    mul = sub.add_parser("mul", help="approximate multiplier tools")
    msub = mul.add_subparsers(dest="mul_command", required=True)
    for name, fn in (("info", _cmd_mul_info), ("gen-lut", _cmd_mul_gen_lut),
                     ("map", _cmd_mul_map)):
        p = msub.add_parser(name)
        p.add_argument("--family", choices=["exact", "truncated", "broken-carry"])
        p.add_argument("--k", type=int, default=0)
        p.add_argument("--multiplier",
                       help="multiplier id or LUT path (alternative to --family)")
        if name != "info":
            p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("inject", help="single fault-injection run")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--multiplier", default="exact")
    p.add_argument("--engine", choices=["systolic", "gpu_tiles"],
                   default="systolic")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--tile", type=int, default=16)
    p.add_argument("--tile-index", type=int, default=0)
    p.add_argument("--percent", type=float, required=True)
    p.add_argument("--bit", type=int, required=True)
    p.add_argument("--kind", choices=["sa0", "sa1"], required=True)
    p.add_argument("--mode", choices=["propagate", "bypass"],
                   default="propagate")
    p.add_argument("--layer", type=int)
    p.add_argument("--sample-limit", type=int)
    p.add_argument("--save-map")
    _add_seed(p)
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("mitigate", help="prune, retrain, retune, re-evaluate")
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True, help="training dataset spec")
    p.add_argument("--test-data", required=True)
    p.add_argument("--multiplier", default="exact")
    p.add_argument("--fault-map", help="existing fault map file")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--percent", type=float, default=16.0)
    p.add_argument("--bit", type=int, default=15)
    p.add_argument("--kind", choices=["sa0", "sa1"], default="sa1")
    p.add_argument("--acc-thresh", type=float, default=0.0)
    p.add_argument("--activations", choices=["uniform", "empirical"],
                   default="uniform")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_hp_flags(p)
    _add_seed(p)
    p.set_defaults(func=_cmd_mitigate)

    cp = sub.add_parser("campaign", help="multi-axis sweeps")
    csub = cp.add_subparsers(dest="campaign_command", required=True)
    p = csub.add_parser("run")
    p.add_argument("--spec", required=True, help="campaign config (JSON)")
    p.add_argument("--weights", required=True)
    p.add_argument("--train-data", help="needed when the campaign config enables mitigation")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--energy", help='"illustrative" or a JSON table path')
    p.add_argument("--timing", action="store_true")
    _add_seed(p)
    p.set_defaults(func=_cmd_campaign_run)
    p = csub.add_parser("report")
    p.add_argument("--records", required=True, help="records.json path")
    p.add_argument("--out", required=True)
    p.add_argument("--energy")
    p.set_defaults(func=_cmd_campaign_report)

    p = sub.add_parser("dataset", help="dataset tools")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    p = dsub.add_parser("convert")
    p.add_argument("--images", help="raw IDX images file")
    p.add_argument("--labels", help="raw IDX labels file")
    p.add_argument("--cifar", help="comma-separated CIFAR-10 binary batches")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dataset_convert)

    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
