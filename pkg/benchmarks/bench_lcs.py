"""Time the compiled LCS kernel against the pure-Python fallback.

Both kernels get identical random token-id sequences and must agree on
every answer; times are best-of-N per sequence length.

Usage: python benchmarks/bench_lcs.py [--sizes 100,200,350] [--repeats 5]
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from array import array

from personasum.metrics import _lcs_py

try:
    from personasum.metrics import _lcs_cy
except ImportError:
    _lcs_cy = None


def best_of(repeats: int, fn, *args) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="100,200,350,500",
                        help="comma-separated sequence lengths")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--vocab", type=int, default=50,
                        help="distinct token ids (smaller means longer LCS)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _lcs_cy is None:
        print("compiled kernel is not built; run pip install -e . first",
              file=sys.stderr)
        return 1

    rng = random.Random(args.seed)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    print(f"{'length':>8}  {'pure (ms)':>10}  {'compiled (ms)':>13}  {'speedup':>8}")
    for size in sizes:
        a = [rng.randrange(args.vocab) for _ in range(size)]
        b = [rng.randrange(args.vocab) for _ in range(size)]
        ca, cb = array("i", a), array("i", b)
        want = _lcs_py.lcs_length(a, b)
        got = _lcs_cy.lcs_length(ca, cb)
        if want != got:
            print(f"backend disagreement at length {size}: {want} != {got}",
                  file=sys.stderr)
            return 1
        pure_s = best_of(args.repeats, _lcs_py.lcs_length, a, b)
        comp_s = best_of(args.repeats, _lcs_cy.lcs_length, ca, cb)
        speedup = pure_s / comp_s if comp_s else float("inf")
        print(f"{size:>8}  {pure_s * 1e3:>10.3f}  {comp_s * 1e3:>13.3f}  "
              f"{speedup:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
