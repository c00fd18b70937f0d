#!/usr/bin/env python3
"""Check the default grammar probabilities against the bundled reference.

This is the provenance run behind GrammarParams.default(): it generates a
100k histogram-matched corpus from the defaults, applies the systematicity
and productivity splits, and reports whether the summary statistics land in
the documented windows (train side near 4.35 functions on average, held-out
side near 11.5, systematicity train near 82k of a 100k base).  Run it after
touching either the default probabilities or
scripts/build_reference_distribution.py; if a window fails, adjust the
function weights (bigram coverage) or the tilt goals in the reference
builder (side means) and iterate.
"""

from __future__ import annotations

import argparse

from pcfgset.cli import reference_spec_path
from pcfgset.generation import GrammarParams
from pcfgset.naturalise import DistributionSpec, naturalised_corpus
from pcfgset.seeding import DEFAULT_SEED, substream
from pcfgset.suite import (
    DEFAULT_HELD_OUT_PAIRS,
    contains_pair,
    productivity_split,
    systematicity_split,
)

WINDOWS = {
    "systematicity train size": (77_900, 86_100),
    "productivity train avg functions": (3.44, 5.28),
    "productivity test avg functions": (9.20, 13.80),
    "mean functions": (3.0, 8.0),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=100_000)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--spec", default=str(reference_spec_path()))
    args = parser.parse_args()

    spec = DistributionSpec.from_csv(args.spec)
    base = naturalised_corpus(
        spec, GrammarParams.default(), args.size, rng=substream(args.seed, "base")
    )
    positives = sum(1 for s in base if contains_pair(s.src, DEFAULT_HELD_OUT_PAIRS))
    sys_train, sys_test = systematicity_split(
        base, list(DEFAULT_HELD_OUT_PAIRS), 10_000, rng=substream(args.seed, "sys")
    )
    prod_train, prod_test = productivity_split(base)

    observed = {
        "systematicity train size": len(sys_train.samples),
        "productivity train avg functions": sum(
            s.stats.num_functions for s in prod_train
        ) / len(prod_train.samples),
        "productivity test avg functions": sum(
            s.stats.num_functions for s in prod_test
        ) / len(prod_test.samples),
        "mean functions": sum(s.stats.num_functions for s in base) / len(base.samples),
    }
    print(f"base size {len(base.samples)}, bigram positives {positives}, "
          f"systematicity test {len(sys_test.samples)}")
    failures = 0
    for name, (lo, hi) in WINDOWS.items():
        value = observed[name]
        ok = lo <= value <= hi
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3f} in [{lo}, {hi}]")
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
