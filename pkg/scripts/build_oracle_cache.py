"""Regenerate the packaged oracle cache (reference optima, output ranges).

Run from the repository root:

    python scripts/build_oracle_cache.py

Takes a few minutes: each entry sweeps >= 2^20 quasi-random designs and
refines the best candidates with bounded local search.
"""

import time
from pathlib import Path

from bope.problems import (
    DEFAULT_PAIRINGS,
    OracleCache,
    get_problem,
    get_utility,
)

OUT = Path(__file__).resolve().parent.parent / "src" / "bope" / "data" / "oracle_cache.json"


def main() -> None:
    cache = OracleCache(OUT)
    for problem_name, utility_name in DEFAULT_PAIRINGS.items():
        problem = get_problem(problem_name)
        utility = get_utility(utility_name)
        t0 = time.time()
        value = cache.optimum(problem, utility)
        low, high = cache.output_range(problem)
        print(
            f"{problem_name}+{utility_name}: optimum={value:.10g} "
            f"range_low={low.round(4).tolist()} range_high={high.round(4).tolist()} "
            f"({time.time() - t0:.1f}s)"
        )
    print(f"cache written to {OUT}")


if __name__ == "__main__":
    main()
