"""Shaping generated corpora toward a natural length/depth distribution.

The pipeline starts from trees sampled under per-instance random
probabilities, partitions them on binned (length, depth) features,
subsamples each bin to the relative frequencies of a reference histogram,
re-estimates grammar parameters from the survivors by maximum likelihood,
and regenerates.  Progress is scored by the KL divergence between
two-variate Gaussians fitted to the feature clouds, and the loop repeats
until the improvement falls below a tolerance.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .generation import (
    Alphabet,
    Corpus,
    GrammarParams,
    Sample,
    generate_corpus,
    sample_tree,
)
from .language import DEFAULT_REGISTRY, Apply, Leaf, SyntaxTree
from .seeding import substream

DEFAULT_EPSILON = 1e-3
DEFAULT_MAX_ITERS = 5
RANDOM_SAMPLE_NODE_BUDGET = 2_000


class EmptyAnchorCell(Exception):
    """The random sample has no instance in the reference's largest cell."""


class DegenerateCovariance(Exception):
    """Too few or collinear feature points for a Gaussian fit."""


class SingularCovariance(Exception):
    """KL divergence is undefined for a non positive-definite covariance."""


@dataclass(frozen=True)
class DistributionSpec:
    """Reference histogram over (length, depth) cells.

    CSV format: header ``length,depth,count`` then one row per cell.
    Zero-count rows are accepted on read and dropped.
    """

    entries: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        seen = set()
        for length, depth, count in self.entries:
            if length < 1 or depth < 0 or count < 1:
                raise ValueError(f"bad entry ({length}, {depth}, {count})")
            if (length, depth) in seen:
                raise ValueError(f"duplicate cell ({length}, {depth})")
            seen.add((length, depth))

    @property
    def total(self) -> int:
        return sum(c for _, _, c in self.entries)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, int]]) -> "DistributionSpec":
        return cls(tuple((l, d, c) for l, d, c in rows if c > 0))

    @classmethod
    def from_csv(cls, path: str | Path) -> "DistributionSpec":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["length", "depth", "count"]:
                raise ValueError(f"{path}: expected header 'length,depth,count'")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}:{lineno}: expected three columns")
                try:
                    l, d, c = (int(x) for x in row)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: non-integer value") from exc
                if min(l, d, c) < 0:
                    raise ValueError(f"{path}:{lineno}: negative value")
                rows.append((l, d, c))
        return cls.from_rows(rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["length", "depth", "count"])
            for length, depth, count in sorted(self.entries):
                writer.writerow([length, depth, count])


@dataclass(frozen=True)
class PartitionConfig:
    """Bin widths for the partitioning vector (length // i, depth // j)."""

    i_length: int
    i_depth: int

    def __post_init__(self):
        if self.i_length < 1 or self.i_depth < 1:
            raise ValueError("increments must be positive integers")

    def vector(self, length: int, depth: int) -> tuple[int, int]:
        return (length // self.i_length, depth // self.i_depth)


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray


def round_half_up(x: float) -> int:
    """Rounding with ties away from zero, for quota arithmetic."""
    import math

    return int(math.floor(x + 0.5))


def extract_features(corpus: Corpus) -> list[tuple[int, int]]:
    return [(s.stats.length, s.stats.depth) for s in corpus]


def random_probability_sample(
    n: int,
    alphabet: Alphabet | None = None,
    rng: random.Random | None = None,
    *,
    max_arg_len: int = 5,
    max_recursion: int = 25,
    max_nodes: int = RANDOM_SAMPLE_NODE_BUDGET,
) -> Corpus:
    """Corpus of ``n`` trees, each under freshly randomised probabilities.

    Per instance the production triple and the leaf-length distribution
    are drawn from symmetric Dirichlet(1) priors (uniform on the simplex);
    function weights stay uniform.  No uniqueness constraints apply here:
    the sample only exists to cover feature space.
    """
    alphabet = alphabet or Alphabet.default()
    rng = rng or random.Random(0)
    uniform_weights = {name: 1.0 for name in DEFAULT_REGISTRY.names()}

    def dirichlet(k: int) -> list[float]:
        draws = [rng.gammavariate(1.0, 1.0) for _ in range(k)]
        total = sum(draws)
        return [d / total for d in draws]

    samples = []
    for i in range(n):
        p_unary, p_binary, p_leaf = dirichlet(3)
        len_probs = dirichlet(max_arg_len)
        params = GrammarParams(
            p_unary=p_unary,
            p_binary=p_binary,
            p_leaf=p_leaf,
            fn_weights=uniform_weights,
            arg_len_dist={k + 1: p for k, p in enumerate(len_probs)},
            max_arg_len=max_arg_len,
        )
        tree = sample_tree(
            params,
            rng,
            alphabet=alphabet,
            max_recursion=max_recursion,
            max_nodes=max_nodes,
        )
        samples.append(Sample.from_tree(i, tree))
    return Corpus(samples)


def partition(
    features: Sequence[tuple[int, int]], config: PartitionConfig
) -> dict[tuple[int, int], list[int]]:
    """Group feature indices by their partitioning vector."""
    cells: dict[tuple[int, int], list[int]] = {}
    for idx, (length, depth) in enumerate(features):
        cells.setdefault(config.vector(length, depth), []).append(idx)
    return cells


def _spec_cells(
    spec: DistributionSpec, config: PartitionConfig
) -> dict[tuple[int, int], int]:
    cells: dict[tuple[int, int], int] = {}
    for length, depth, count in spec.entries:
        vec = config.vector(length, depth)
        cells[vec] = cells.get(vec, 0) + count
    return cells


def subsample_to_match(
    d_r: Corpus,
    d_n: DistributionSpec,
    config: PartitionConfig,
    rng: random.Random,
) -> Corpus:
    """Subsample ``d_r`` so its cell masses track the reference histogram.

    The largest reference cell anchors the scale: the matching sample cell
    is kept whole, and every other cell's quota is the reference count
    scaled by |anchor sample cell| / |anchor reference cell|, rounded half
    up and capped by availability.  Cells absent from the reference
    contribute nothing.
    """
    features = extract_features(d_r)
    sample_cells = partition(features, config)
    ref_cells = _spec_cells(d_n, config)
    anchor_vec = min(
        (vec for vec in ref_cells),
        key=lambda v: (-ref_cells[v], v),
    )
    anchor_pool = sample_cells.get(anchor_vec, [])
    if not anchor_pool:
        raise EmptyAnchorCell(
            f"no sample in the largest reference cell {anchor_vec} "
            f"(increments {config.i_length}x{config.i_depth})"
        )
    scale = len(anchor_pool) / ref_cells[anchor_vec]
    chosen: list[int] = []
    for vec in sorted(sample_cells):
        ref_count = ref_cells.get(vec, 0)
        if ref_count == 0:
            continue
        pool = sample_cells[vec]
        quota = min(round_half_up(ref_count * scale), len(pool))
        if quota <= 0:
            continue
        chosen.extend(pool if quota == len(pool) else rng.sample(pool, quota))
    chosen.sort()
    return Corpus([d_r.samples[i] for i in chosen], seed=d_r.seed)


def fit_gaussian(
    features: Sequence[tuple[int, int]],
    weights: Sequence[int] | None = None,
) -> GaussianFit:
    """Sample mean and unbiased covariance of 2-d feature points.

    ``weights`` are frequency weights (histogram counts).  Raises
    DegenerateCovariance when fewer than three points are available or the
    points are collinear.
    """
    pts = np.asarray(features, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("features must be (length, depth) pairs")
    if weights is None:
        if pts.shape[0] < 3:
            raise DegenerateCovariance("need at least three feature points")
        mean = pts.mean(axis=0)
        centred = pts - mean
        cov = centred.T @ centred / (pts.shape[0] - 1)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape[0] != pts.shape[0] or np.any(w < 0):
            raise ValueError("weights must be non-negative, one per point")
        total = w.sum()
        if total < 3:
            raise DegenerateCovariance("need at least three weighted points")
        mean = (w[:, None] * pts).sum(axis=0) / total
        centred = pts - mean
        cov = (w[:, None] * centred).T @ centred / (total - 1)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("feature points are collinear") from exc
    return GaussianFit(mean=mean, cov=cov)


def fit_gaussian_spec(spec: DistributionSpec) -> GaussianFit:
    pts = [(l, d) for l, d, _ in spec.entries]
    counts = [c for _, _, c in spec.entries]
    return fit_gaussian(pts, weights=counts)


def kl_gaussian(p: GaussianFit, q: GaussianFit) -> float:
    """KL divergence between two 2-d Gaussians, in nats.

    0.5 * (tr(Sq^-1 Sp) + (mq - mp)^T Sq^-1 (mq - mp) - 2
           + ln det Sq - ln det Sp)
    """
    sign_q, logdet_q = np.linalg.slogdet(q.cov)
    sign_p, logdet_p = np.linalg.slogdet(p.cov)
    if sign_q <= 0 or sign_p <= 0:
        raise SingularCovariance("covariances must be positive definite")
    try:
        q_inv = np.linalg.inv(q.cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    diff = q.mean - p.mean
    term_trace = float(np.trace(q_inv @ p.cov))
    term_mahal = float(diff @ q_inv @ diff)
    return 0.5 * (term_trace + term_mahal - 2.0 + logdet_q - logdet_p)


DEFAULT_INCREMENT_GRID = tuple(
    PartitionConfig(i, j) for i in (1, 2, 3) for j in (1, 2, 3)
)


def select_increments(
    d_r: Corpus,
    d_n: DistributionSpec,
    candidate_configs: Sequence[PartitionConfig] = DEFAULT_INCREMENT_GRID,
    rng: random.Random | None = None,
) -> tuple[PartitionConfig, Corpus, float]:
    """Try every candidate bin width and keep the subsample with least KL.

    Each candidate runs on its own derived substream, so the winner does
    not depend on evaluation order.  Ties go to the earliest candidate.
    Returns (config, subsampled corpus, kl).
    """
    rng = rng or random.Random(0)
    base = rng.getrandbits(64)
    reference = fit_gaussian_spec(d_n)
    best: tuple[PartitionConfig, Corpus, float] | None = None
    for config in candidate_configs:
        sub_rng = substream(base, "increments", config.i_length, config.i_depth)
        subset = subsample_to_match(d_r, d_n, config, sub_rng)
        fit = fit_gaussian(extract_features(subset))
        kl = kl_gaussian(fit, reference)
        if best is None or kl < best[2]:
            best = (config, subset, kl)
    assert best is not None
    return best


def mle_estimate(
    corpus: Corpus,
    *,
    max_arg_len: int | None = None,
) -> GrammarParams:
    """Maximum-likelihood grammar parameters from observed trees.

    Counts every tree position (including roots) as one expansion of the
    three-way choice; function identities and leaf lengths are counted
    within their own distributions.  Every category receives add-one
    smoothing, so choices never observed keep a small positive mass.
    """
    n_unary = n_binary = n_leaf = 0
    fn_counts: dict[str, int] = {}
    len_counts: dict[int, int] = {}

    def walk(node: SyntaxTree) -> None:
        nonlocal n_unary, n_binary, n_leaf
        if isinstance(node, Leaf):
            n_leaf += 1
            len_counts[len(node.symbols)] = len_counts.get(len(node.symbols), 0) + 1
            return
        if node.function.arity == 1:
            n_unary += 1
        else:
            n_binary += 1
        fn_counts[node.function.name] = fn_counts.get(node.function.name, 0) + 1
        for a in node.args:
            walk(a)

    for s in corpus:
        walk(s.tree)

    total = n_unary + n_binary + n_leaf
    if total == 0:
        raise ValueError("cannot estimate parameters from an empty corpus")
    p_unary = (n_unary + 1) / (total + 3)
    p_binary = (n_binary + 1) / (total + 3)
    p_leaf = (n_leaf + 1) / (total + 3)

    unary_names = DEFAULT_REGISTRY.unary_names()
    binary_names = DEFAULT_REGISTRY.binary_names()
    fn_weights: dict[str, float] = {}
    u_total = sum(fn_counts.get(n, 0) for n in unary_names) + len(unary_names)
    for name in unary_names:
        fn_weights[name] = (fn_counts.get(name, 0) + 1) / u_total
    b_total = sum(fn_counts.get(n, 0) for n in binary_names) + len(binary_names)
    for name in binary_names:
        fn_weights[name] = (fn_counts.get(name, 0) + 1) / b_total

    observed_max = max(len_counts) if len_counts else 1
    support = max_arg_len or observed_max
    if observed_max > support:
        raise ValueError(f"leaf of length {observed_max} exceeds max_arg_len {support}")
    l_total = sum(len_counts.values()) + support
    arg_len_dist = {
        k: (len_counts.get(k, 0) + 1) / l_total for k in range(1, support + 1)
    }
    return GrammarParams(
        p_unary=p_unary,
        p_binary=p_binary,
        p_leaf=p_leaf,
        fn_weights=fn_weights,
        arg_len_dist=arg_len_dist,
        max_arg_len=support,
    )


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    i_length: int
    i_depth: int
    kl: float


@dataclass
class PipelineResult:
    params: GrammarParams
    corpus: Corpus
    initial_kl: float
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def final_kl(self) -> float:
        return self.trace[-1].kl if self.trace else self.initial_kl


def naturalise_pipeline(
    d_n: DistributionSpec,
    *,
    rng: random.Random,
    alphabet: Alphabet | None = None,
    candidate_configs: Sequence[PartitionConfig] = DEFAULT_INCREMENT_GRID,
    random_sample_size: int = 20_000,
    regenerate_size: int = 20_000,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
    max_arg_len: int = 5,
) -> PipelineResult:
    """Full distribution-matching loop.

    Each iteration subsamples the current corpus toward the reference
    (searching the increment grid anew), refits grammar parameters on the
    survivors, and regenerates.  A candidate state is adopted only if its
    recorded KL improves on the incumbent, so the trace is monotone
    non-increasing; the loop stops once the improvement drops below
    ``epsilon`` (or on the first non-improving candidate, or after
    ``max_iters`` iterations).
    """
    alphabet = alphabet or Alphabet.default()
    base = rng.getrandbits(64)
    current = random_probability_sample(
        random_sample_size,
        alphabet,
        substream(base, "random-sample"),
        max_arg_len=max_arg_len,
    )
    reference = fit_gaussian_spec(d_n)
    initial_kl = kl_gaussian(fit_gaussian(extract_features(current)), reference)

    params: GrammarParams | None = None
    corpus: Corpus | None = None
    best_kl = initial_kl
    trace: list[TraceRow] = []
    for iteration in range(1, max_iters + 1):
        config, subset, kl = select_increments(
            current, d_n, candidate_configs, substream(base, "select", iteration)
        )
        if params is None or kl < best_kl:
            params = mle_estimate(subset, max_arg_len=max_arg_len)
            corpus = generate_corpus(
                params,
                regenerate_size,
                alphabet,
                substream(base, "regen", iteration),
            )
            improvement = best_kl - kl
            best_kl = kl
            trace.append(TraceRow(iteration, config.i_length, config.i_depth, best_kl))
            current = corpus
            if improvement < epsilon:
                break
        else:
            # candidate would regress; keep the incumbent state and stop
            trace.append(TraceRow(iteration, config.i_length, config.i_depth, best_kl))
            break
    assert params is not None and corpus is not None
    return PipelineResult(params=params, corpus=corpus, initial_kl=initial_kl, trace=trace)


def naturalised_corpus(
    d_n: DistributionSpec,
    params: GrammarParams,
    size: int,
    *,
    rng: random.Random,
    config: PartitionConfig | None = None,
    alphabet: Alphabet | None = None,
    pool_factor: float = 2.4,
    max_attempts: int = 4,
) -> Corpus:
    """A ``size``-sample corpus whose (length, depth) histogram tracks ``d_n``.

    Draws a pool from ``params``, keeps the histogram-matched subsample and
    thins it uniformly down to ``size``.  Each retry regrows the pool from
    scratch at a larger size so the argument-uniqueness constraints stay
    global.
    """
    if size < 1:
        raise ValueError("size must be positive")
    config = config or PartitionConfig(1, 1)
    alphabet = alphabet or Alphabet.default()
    pool_size = int(size * pool_factor)
    for _ in range(max_attempts):
        pool = generate_corpus(params, pool_size, alphabet, rng)
        matched = subsample_to_match(pool, d_n, config, rng)
        if len(matched.samples) >= size:
            keep = sorted(rng.sample(range(len(matched.samples)), size))
            samples = [
                replace(matched.samples[i], id=new_id)
                for new_id, i in enumerate(keep)
            ]
            return Corpus(samples, params=params)
        pool_size = int(pool_size * 1.6)
    raise ValueError(
        f"matched subsample stayed below {size} after {max_attempts} attempts"
    )


def write_kl_trace(path: str | Path, result: PipelineResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "i_length", "i_depth", "kl"])
        for row in result.trace:
            writer.writerow([row.iteration, row.i_length, row.i_depth, f"{row.kl:.9f}"])
