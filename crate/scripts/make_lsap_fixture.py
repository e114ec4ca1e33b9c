#!/usr/bin/env python3
"""Generate the rectangular-assignment cross-validation fixture.

Draws random weight matrices too large for exhaustive enumeration,
solves the maximization problem with scipy's linear_sum_assignment, and
freezes the optimal totals into
crates/core/tests/fixtures/lsap_fixture.json.

Run from the repository root:  python3 scripts/make_lsap_fixture.py
"""

import json
import numpy as np
from scipy.optimize import linear_sum_assignment

SEED = 20240613
CASES = [(12, 20), (8, 8), (1, 15), (25, 40), (17, 17), (30, 31)]
OUT = "crates/core/tests/fixtures/lsap_fixture.json"


def main():
    rng = np.random.default_rng(SEED)
    cases = []
    for rows, cols in CASES:
        weights = rng.random((rows, cols))
        r, c = linear_sum_assignment(weights, maximize=True)
        total = float(weights[r, c].sum())
        cases.append({
            "rows": rows,
            "cols": cols,
            "weights": [float(w) for w in weights.ravel()],
            "optimal_total": total,
        })
    with open(OUT, "w") as f:
        json.dump({"cases": cases}, f)
        f.write("\n")
    print(f"wrote {OUT} ({len(cases)} cases)")
    for case in cases:
        print(f"  {case['rows']}x{case['cols']}: {case['optimal_total']:.12f}")


if __name__ == "__main__":
    main()
