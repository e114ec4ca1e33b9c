#!/usr/bin/env python3
"""Generate the synthetic metrics fixture used by the acceptance suite.

Builds two 50x6 response matrices (canonical option indices with a few
missing cells), computes the evaluation metrics with independent
reference routines, and writes everything to
crates/core/tests/fixtures/evaluate_fixture.json.

Conventions frozen here and mirrored by the library:
  * Wasserstein distance on ordinal questions uses unit spacing between
    adjacent options: sum_i |CDF_p(i) - CDF_q(i)|. Computed twice (CDF
    form and an explicit minimal-cost transport LP) and cross-checked.
  * Answer distributions exclude missing cells and renormalize.
  * Correlation matrices are Pearson over pairwise-complete rows;
    pairs with fewer than two complete rows or zero variance get 0.
    Diagonal entries are always 1.
  * Cronbach's alpha uses complete-case rows and population variance:
    alpha = Q/(Q-1) * (1 - sum var(item) / var(total)).
  * n_effective is the number of complete-case rows of the first
    (virtual) matrix.

Run from the repository root:  python3 scripts/make_evaluate_fixture.py
"""

import json
import numpy as np
from scipy.stats import wasserstein_distance
from scipy.optimize import linprog

N = 50
Q = 6
OPTIONS = [5, 5, 4, 5, 3, 5]
MISSING_RATE = 0.05
SEED = 20240612

OUT = "crates/core/tests/fixtures/evaluate_fixture.json"


def gen_matrix(rng, bias):
    """Random matrix of option indices; -1 marks a missing cell."""
    cells = np.zeros((N, Q), dtype=int)
    latent = rng.normal(size=N)  # shared latent trait -> correlated columns
    for q in range(Q):
        m = OPTIONS[q]
        noise = rng.normal(scale=0.8, size=N)
        score = latent + noise + bias[q]
        # squash onto 0..m-1
        col = np.clip(np.round((score + 2.5) / 5.0 * (m - 1)), 0, m - 1)
        cells[:, q] = col.astype(int)
    mask = rng.random(size=(N, Q)) < MISSING_RATE
    cells[mask] = -1
    return cells


def answer_distribution(cells, q, m):
    col = cells[:, q]
    col = col[col >= 0]
    counts = np.bincount(col, minlength=m).astype(float)
    assert counts.sum() > 0
    return counts / counts.sum()


def wd_cdf(p, q):
    return float(np.abs(np.cumsum(p)[:-1] - np.cumsum(q)[:-1]).sum())


def wd_transport_lp(p, q):
    """Minimal-cost transport between p and q with |i-j| ground cost."""
    m = len(p)
    cost = np.abs(np.subtract.outer(np.arange(m), np.arange(m))).ravel()
    a_eq = []
    for i in range(m):  # row sums = p
        row = np.zeros((m, m))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(m):  # col sums = q
        col = np.zeros((m, m))
        col[:, j] = 1
        a_eq.append(col.ravel())
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.concatenate([p, q]),
                  bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


def pairwise_correlation(cells):
    sigma = np.eye(Q)
    for a in range(Q):
        for b in range(a + 1, Q):
            ok = (cells[:, a] >= 0) & (cells[:, b] >= 0)
            x = cells[ok, a].astype(float)
            y = cells[ok, b].astype(float)
            if len(x) < 2 or x.std() == 0 or y.std() == 0:
                r = 0.0
            else:
                r = float(np.corrcoef(x, y)[0, 1])
            sigma[a, b] = sigma[b, a] = r
    return sigma


def cronbach_alpha(cells):
    complete = cells[(cells >= 0).all(axis=1)]
    assert len(complete) >= 2
    item_vars = complete.var(axis=0, ddof=0)
    total_var = complete.sum(axis=1).var(ddof=0)
    assert total_var > 0
    return float(Q / (Q - 1) * (1 - item_vars.sum() / total_var))


def main():
    rng = np.random.default_rng(SEED)
    cells_v = gen_matrix(rng, bias=rng.normal(scale=0.5, size=Q))
    cells_h = gen_matrix(rng, bias=rng.normal(scale=0.5, size=Q))

    per_question_wd = {}
    for q in range(Q):
        m = OPTIONS[q]
        p = answer_distribution(cells_v, q, m)
        r = answer_distribution(cells_h, q, m)
        d_cdf = wd_cdf(p, r)
        d_lp = wd_transport_lp(p, r)
        d_scipy = wasserstein_distance(np.arange(m), np.arange(m), p, r)
        assert abs(d_cdf - d_lp) < 1e-9, (d_cdf, d_lp)
        assert abs(d_cdf - d_scipy) < 1e-9, (d_cdf, d_scipy)
        per_question_wd[f"q{q + 1}"] = d_cdf
    avg_wd = float(np.mean(list(per_question_wd.values())))

    sigma_v = pairwise_correlation(cells_v)
    sigma_h = pairwise_correlation(cells_h)
    fro = float(np.linalg.norm(sigma_v - sigma_h))

    alpha_v = cronbach_alpha(cells_v)
    alpha_h = cronbach_alpha(cells_h)
    n_effective = int((cells_v >= 0).all(axis=1).sum())

    fixture = {
        "question_ids": [f"q{q + 1}" for q in range(Q)],
        "options_per_question": OPTIONS,
        "respondent_ids_v": [f"v{i:03d}" for i in range(N)],
        "respondent_ids_h": [f"h{i:03d}" for i in range(N)],
        "cells_v": [[int(c) if c >= 0 else None for c in row] for row in cells_v],
        "cells_h": [[int(c) if c >= 0 else None for c in row] for row in cells_h],
        "expected": {
            "per_question_wd": per_question_wd,
            "avg_wd": avg_wd,
            "frobenius_gap": fro,
            "cronbach_alpha_virtual": alpha_v,
            "cronbach_alpha_human": alpha_h,
            "n_effective": n_effective,
        },
    }
    with open(OUT, "w") as f:
        json.dump(fixture, f, indent=1)
        f.write("\n")
    print(f"wrote {OUT}")
    print(json.dumps(fixture["expected"], indent=2))


if __name__ == "__main__":
    main()
