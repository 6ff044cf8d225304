"""Run the acceptance criteria and print one line per criterion.

    python3 scripts/run_acceptance.py [--workers N] [criterion ...]

Exit status is 0 only if every selected criterion passes.
"""

import argparse
import sys
import time

from hyperbm.acceptance import run_all


def main():
    p = argparse.ArgumentParser()
    p.add_argument("criteria", nargs="*", type=int)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    t0 = time.perf_counter()
    res = run_all(args.criteria or None, workers=args.workers)
    n_pass = sum(r.passed for r in res)
    print(f"{n_pass}/{len(res)} criteria pass in {time.perf_counter() - t0:.1f} s")
    return 0 if n_pass == len(res) else 1


if __name__ == "__main__":
    sys.exit(main())
