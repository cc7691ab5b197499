#!/usr/bin/env python3
"""Global-vs-local bank mapping sweep over the anchored-block workload.

For each (blocks, transposes) grid point, assigns mappings with the
propagating pass and with the per-operator baseline, and tabulates the
inter-bank memcopy bytes each one inserts.
"""

import argparse
import sys

from nestopt.bankmap import AnchorRegistry, run_global_mapping, run_local_baseline
from nestopt.generators import generate_resnet_analog
from nestopt.interp import equivalent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-blocks", type=int, default=8)
    ap.add_argument("--max-transposes", type=int, default=3)
    ap.add_argument("--banks", type=int, default=None)
    ap.add_argument("--anchors", type=str, default=None, help="anchor registry JSON")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--verify", action="store_true", help="also run the interpreter oracle")
    args = ap.parse_args()

    registry = (
        AnchorRegistry.from_file(args.anchors, args.banks)
        if args.anchors
        else AnchorRegistry.default(args.banks)
    )

    print(f"{'B':>3}{'T':>3}{'global bytes':>14}{'local bytes':>13}{'saved':>9}")
    worst = 0.0
    for blocks in range(1, args.max_blocks + 1):
        for transposes in range(0, args.max_transposes + 1):
            program = generate_resnet_analog(blocks, transposes, args.seed)
            g_prog, _, g_report = run_global_mapping(program, registry)
            l_prog, l_report = run_local_baseline(program, registry)
            if args.verify:
                for name, opt in (("global", g_prog), ("local", l_prog)):
                    res = equivalent(program, opt, trials=2, seed=args.seed)
                    if not res.equivalent:
                        print(f"FAILED {name} oracle at B={blocks} T={transposes}: "
                              f"{res.counterexample}", file=sys.stderr)
                        return 1
            g, l = g_report.inserted_bytes, l_report.inserted_bytes
            saved = "n/a" if l == 0 else f"{100.0 * (l - g) / l:.0f}%"
            if l:
                worst = max(worst, g / l)
            print(f"{blocks:>3}{transposes:>3}{g:>14,}{l:>13,}{saved:>9}")
    print(f"\nglobal/local byte ratio never above {worst:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
