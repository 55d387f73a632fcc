"""Run registered scenarios, write their output bundles and print one line per check."""

import argparse
import sys
import time

from curvediff.scenarios import SCENARIOS, run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="*", default=list(SCENARIOS), help="scenario names (default: all)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--svg", action="store_true")
    args = parser.parse_args()

    all_passed = True
    for name in args.names:
        start = time.perf_counter()
        result = run_scenario(name, out_dir=args.out, svg=args.svg)
        final = result.trajectory.final_state
        print(f"{name}: {'PASS' if result.passed else 'FAIL'}  steps={final.step} t={final.t:.4f} "
              f"wall={time.perf_counter() - start:.1f}s")
        for c in result.checks:
            print(f"    {'ok ' if c.holds else 'BAD'} {c.check:32s} bound={c.bound:<12.4g} observed={c.observed:<12.4g} "
                  f"{c.detail}")
        all_passed &= result.passed
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
