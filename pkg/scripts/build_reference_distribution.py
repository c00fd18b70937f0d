#!/usr/bin/env python3
"""Build the bundled reference length/depth histogram.

The reference plays the role of a natural-language corpus profile: sentence
complexity rises to a mode and decays in a long geometric tail instead of
following the short-headed shape raw tree sampling produces.  We construct it
by reweighting a large sample from the default grammar so the number of
functions per sequence follows a tilted distribution P(F) proportional to
F^a * rho^F, with (a, rho) solved so that the mean over F <= 8 is
TRAIN_GOAL and the mean over F >= 9 is TEST_GOAL.  Matching a fresh corpus
against the resulting histogram then lands the observed per-side means near
4.35 and 11.5 functions (the matching step smears the tilt back toward the
sampling distribution, which the overshoot in the goals compensates for).

The two shortest classes get an extra suppression factor (HEAD_CRUSH) since
natural text has almost no two-word sentences and the raw sampler produces
many.

Running this script with its defaults regenerates
src/pcfgset/data/reference_length_depth.csv byte for byte.
"""

from __future__ import annotations

import argparse
from collections import Counter
from pathlib import Path

from pcfgset.generation import GrammarParams, generate_corpus
from pcfgset.naturalise import DistributionSpec

TRAIN_GOAL = 4.9
TEST_GOAL = 10.6
HEAD_CRUSH = {1: 0.25, 2: 0.6}
SIDE_SPLIT = 8  # F <= 8 counts toward the train-side mean


def side_means(weights: dict[int, float]) -> tuple[float, float]:
    lo_w = sum(w for f, w in weights.items() if f <= SIDE_SPLIT)
    hi_w = sum(w for f, w in weights.items() if f > SIDE_SPLIT)
    lo = sum(f * w for f, w in weights.items() if f <= SIDE_SPLIT) / max(lo_w, 1e-12)
    hi = sum(f * w for f, w in weights.items() if f > SIDE_SPLIT) / max(hi_w, 1e-12)
    return lo, hi


def fit_tilt(f_max: int) -> tuple[float, float]:
    """Solve P(F) ~ F^a * rho^F for the two side-mean goals.

    For each shape exponent on a coarse grid, rho is bisected until the
    train-side mean hits TRAIN_GOAL; the pair whose test-side mean comes
    closest to TEST_GOAL wins.
    """
    best: tuple[float, float, float] | None = None
    for tenth in range(0, 90):
        a = tenth / 10
        lo_r, hi_r = 0.05, 0.98
        for _ in range(60):
            mid = (lo_r + hi_r) / 2
            dist = {f: (f ** a) * (mid ** f) for f in range(1, f_max + 1)}
            if side_means(dist)[0] < TRAIN_GOAL:
                lo_r = mid
            else:
                hi_r = mid
        rho = (lo_r + hi_r) / 2
        dist = {f: (f ** a) * (rho ** f) for f in range(1, f_max + 1)}
        err = abs(side_means(dist)[1] - TEST_GOAL)
        if best is None or err < best[0]:
            best = (err, a, rho)
    assert best is not None
    return best[1], best[2]


def build_spec(pool, total: int) -> DistributionSpec:
    f_hat = Counter(s.stats.num_functions for s in pool)
    n = len(pool.samples)
    a, rho = fit_tilt(max(f_hat))
    target = {f: (f ** a) * (rho ** f) for f in f_hat}
    z = sum(target.values())
    # Per-sample importance weight: target mass over empirical mass, with
    # the short-sequence classes pushed further down.
    weight = {f: (target[f] / z) * n / f_hat[f] for f in f_hat}
    for f, crush in HEAD_CRUSH.items():
        if f in weight:
            weight[f] *= crush
    cells: Counter[tuple[int, int]] = Counter()
    for s in pool:
        cells[(s.stats.length, s.stats.depth)] += weight[s.stats.num_functions]
    scale = total / sum(cells.values())
    rows = []
    for (length, depth), mass in sorted(cells.items()):
        count = round(mass * scale)
        if count >= 1:
            rows.append((length, depth, count))
    print(f"tilt: a={a:.1f} rho={rho:.4f} cells={len(rows)} "
          f"total={sum(r[2] for r in rows)}")
    return DistributionSpec.from_rows(rows)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pool-size", type=int, default=300_000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--total", type=int, default=50_000)
    parser.add_argument(
        "--out",
        default=str(
            Path(__file__).resolve().parent.parent
            / "src" / "pcfgset" / "data" / "reference_length_depth.csv"
        ),
    )
    args = parser.parse_args()

    pool = generate_corpus(GrammarParams.default(), args.pool_size, seed=args.seed)
    spec = build_spec(pool, args.total)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    spec.to_csv(out)
    print(f"wrote {out} ({len(spec.entries)} cells, total {spec.total})")


if __name__ == "__main__":
    main()
