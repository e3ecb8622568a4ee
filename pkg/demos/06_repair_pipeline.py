"""Break an accelerator, then repair the network that runs on it.

The pipeline in run_mitigation has three stages: prune the weights that sit
on faulty MACs (the array runs in bypass mode, so those products are zero
anyway), retrain the remaining weights with the pruned ones pinned to zero,
then retune the stored int8 codes against the approximate multiplier.
"""

import axfault as ax


def main():
    train, test, source = ax.mnist_or_synthetic()
    model = ax.desk_model("mp-tanh-desk")
    weights = ax.train(model, train, ax.HyperParams(
        lr=0.05, momentum=0.9, batch_size=64, epochs=8, seed=11))

    m = ax.truncated_multiplier(3)
    cfg = ax.SystolicConfig(n=16, mode="propagate")
    fault = ax.StuckAtFault(bit=15, kind="sa1")
    fm = ax.random_fault_map(n=16, percent=16.0, fault=fault, seed=3)
    print(f"data source: {source}")
    print(f"fault map: {len(fm)} of 256 MACs stuck (sa1 at product bit 15)")

    hp = ax.HyperParams(lr=0.03, momentum=0.9, batch_size=64, epochs=6,
                        seed=21)
    clean_env = ax.ExecEnv(engine="systolic", multiplier=m,
                           systolic=ax.SystolicConfig(n=16, mode="bypass"))
    target = ax.evaluate(model, weights, test, env=clean_env) - 1.0

    repaired, report = ax.run_mitigation(
        model, weights, fm, cfg, m, train, test, hp, acc_thresh=target)

    pruned = sum(report.pruned_per_layer.values())
    print(f"\nbaseline (no faults):      {report.baseline_acc:6.2f} %")
    print(f"faulty, propagate mode:    {report.faulty_acc_before:6.2f} %")
    print(f"repaired, bypass mode:     {report.acc_after:6.2f} %")
    print(f"weights pruned: {pruned} "
          f"(per layer {report.pruned_per_layer}), "
          f"retrain epochs used: {report.epochs_used}, "
          f"reached target: {report.reached_thresh}")


if __name__ == "__main__":
    main()
