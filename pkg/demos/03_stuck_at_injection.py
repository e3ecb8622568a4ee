"""Inject a stuck-at fault into one cell of a weight-stationary array.

Weights are stationed modulo n, so array cell (i, j) multiplies every
weight W[r, d] with r mod n == i and d mod n == j. A single broken cell
therefore poisons whole output rows, one reduction term at a time. The
demo prints the faulty GEMM output and marks the entries that actually
changed.
"""

import numpy as np

import axfault as ax


def main():
    rng = np.random.default_rng(7)
    W = rng.integers(-20, 21, size=(6, 5), dtype=np.int8)
    A = rng.integers(-20, 21, size=(5, 8), dtype=np.int8)

    m = ax.exact_multiplier()
    cfg = ax.SystolicConfig(n=4, mode="propagate")
    fault = ax.StuckAtFault(bit=13, kind="sa1")
    fm = ax.FaultMap(n=4, entries={(1, 2): fault})

    clean = ax.systolic_gemm(W, A, m, None, cfg)
    bad = ax.systolic_gemm(W, A, m, fm, cfg)

    print(f"fault: {fault.kind} at product bit {fault.bit}, "
          f"array cell (1, 2) of a 4x4 array")
    print("stationing: output rows with r mod 4 == 1 are exposed,")
    print("through the reduction terms with d mod 4 == 2\n")

    diff = clean != bad
    for r in range(clean.shape[0]):
        row = " ".join(
            f"{bad[r, c]:>7}{'*' if diff[r, c] else ' '}"
            for c in range(clean.shape[1])
        )
        print(row)
    print("\n(* = corrupted by the stationed fault)")

    hit_rows = sorted({int(r) for r in np.nonzero(diff)[0]})
    print(f"rows touched: {hit_rows}")
    print("entries in those rows that kept their value had a negative term")
    print("on the faulty cell, whose bit 13 was already 1 in two's complement\n")

    # Bypass mode zeroes the faulty cell's contribution instead of letting
    # the flipped bit through, which is how the repair pipeline runs.
    cfg_b = ax.SystolicConfig(n=4, mode="bypass")
    by = ax.systolic_gemm(W, A, m, fm, cfg_b)
    print(f"propagate worst |delta|: {int(np.abs(bad - clean).max())}")
    print(f"bypass    worst |delta|: {int(np.abs(by - clean).max())}")


if __name__ == "__main__":
    main()
