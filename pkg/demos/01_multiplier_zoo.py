"""Build the stock approximate multipliers and compare their error profiles.

Every multiplier is a full 256x256 lookup table over signed 8-bit operands,
so the error metrics below are exhaustive, not sampled.
"""

import tempfile
from pathlib import Path

import axfault as ax


def main():
    zoo = [ax.exact_multiplier()]
    zoo += [ax.truncated_multiplier(k) for k in (1, 2, 4, 6, 8)]
    zoo += [ax.broken_carry_multiplier(k) for k in (1, 2, 3)]

    print(f"{'multiplier':<16} {'mae %':>12} {'worst |err|':>12} {'bad pairs':>10}")
    for m in zoo:
        e = ax.error_metrics(m)
        print(f"{m.id:<16} {e.mae_percent:>12.6f} {e.worst_case_abs:>12d} "
              f"{e.error_count:>10d}")

    # A couple of spot checks against plain integer multiplication.
    t4 = ax.truncated_multiplier(4)
    for x, y in [(7, 9), (-100, 50), (127, -128)]:
        print(f"  {x:>5} * {y:>4}: exact={x * y:>7}  truncated-4="
              f"{int(ax.multiply(t4, x, y)):>7}")

    # Tables round-trip through the raw .axlut format byte for byte.
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "t4.axlut"
        ax.save_lut(t4, path)
        back = ax.load_lut(path, mult_id=t4.id)
        same = back.table.tobytes() == t4.table.tobytes()
        print(f"LUT file {path.name}: {path.stat().st_size} bytes, "
              f"round trip exact: {same}")


if __name__ == "__main__":
    main()
