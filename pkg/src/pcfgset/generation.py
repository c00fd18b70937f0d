"""Probabilistic generation of PCFG SET corpora.

Trees are drawn top-down from a three-way choice (unary call, binary call,
string leaf) with function identities and leaf lengths drawn from their own
distributions.  Corpus assembly enforces the anti-memorisation constraints:
distinct sources, no repeated literal within a sample, and no reuse of a
multi-symbol string argument anywhere else in the corpus.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .language import (
    DEFAULT_REGISTRY,
    Apply,
    FunctionRegistry,
    Leaf,
    SequenceStats,
    SyntaxTree,
    evaluate,
    parse,
    render,
    stats,
)

MAX_RECURSION_DEFAULT = 25


class ExhaustedUniqueArguments(Exception):
    """Could not satisfy the corpus uniqueness constraints by resampling."""


@dataclass(frozen=True)
class Alphabet:
    """The literal symbol inventory.

    The default inventory is A..Z followed by the suffixed variants A1..Z1
    up to A19..Z19, 520 symbols in total.
    """

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be distinct")
        if not self.symbols:
            raise ValueError("alphabet must not be empty")

    def __len__(self) -> int:
        return len(self.symbols)

    @classmethod
    def default(cls) -> "Alphabet":
        letters = list(string.ascii_uppercase)
        syms = letters + [f"{c}{i}" for i in range(1, 20) for c in letters]
        return cls(tuple(syms))


@dataclass(frozen=True)
class GrammarParams:
    """Production probabilities for tree sampling.

    ``p_unary`` / ``p_binary`` / ``p_leaf`` govern the expansion of every
    tree position; ``fn_weights`` (normalised within the unary and binary
    classes separately) pick the function identity; ``arg_len_dist`` maps
    leaf length to probability.
    """

    p_unary: float
    p_binary: float
    p_leaf: float
    fn_weights: dict[str, float]
    arg_len_dist: dict[int, float]
    max_arg_len: int = 5

    def __post_init__(self):
        triple = (self.p_unary, self.p_binary, self.p_leaf)
        if any(p < 0 for p in triple):
            raise ValueError("production probabilities must be non-negative")
        if abs(sum(triple) - 1.0) > 1e-9:
            raise ValueError("p_unary + p_binary + p_leaf must equal 1")
        if any(w < 0 for w in self.fn_weights.values()):
            raise ValueError("function weights must be non-negative")
        unary = [self.fn_weights.get(n, 0.0) for n in DEFAULT_REGISTRY.unary_names()]
        binary = [self.fn_weights.get(n, 0.0) for n in DEFAULT_REGISTRY.binary_names()]
        if sum(unary) <= 0 or sum(binary) <= 0:
            raise ValueError("each function class needs positive total weight")
        if not self.arg_len_dist:
            raise ValueError("arg_len_dist must not be empty")
        if any(k < 1 or k > self.max_arg_len for k in self.arg_len_dist):
            raise ValueError("leaf lengths must lie in 1..max_arg_len")
        if any(p < 0 for p in self.arg_len_dist.values()):
            raise ValueError("leaf length probabilities must be non-negative")
        if abs(sum(self.arg_len_dist.values()) - 1.0) > 1e-9:
            raise ValueError("arg_len_dist must sum to 1")

    @classmethod
    def default(cls) -> "GrammarParams":
        """Parameters fitted by the naturalisation pipeline against the
        bundled reference length/depth distribution (see
        scripts/calibrate_default_grammar.py for the provenance run)."""
        return _DEFAULT_PARAMS

    def to_dict(self) -> dict:
        return {
            "p_unary": self.p_unary,
            "p_binary": self.p_binary,
            "p_leaf": self.p_leaf,
            "fn_weights": dict(self.fn_weights),
            "arg_len_dist": {str(k): v for k, v in self.arg_len_dist.items()},
            "max_arg_len": self.max_arg_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GrammarParams":
        return cls(
            p_unary=float(d["p_unary"]),
            p_binary=float(d["p_binary"]),
            p_leaf=float(d["p_leaf"]),
            fn_weights={k: float(v) for k, v in d["fn_weights"].items()},
            arg_len_dist={int(k): float(v) for k, v in d["arg_len_dist"].items()},
            max_arg_len=int(d.get("max_arg_len", 5)),
        )


@dataclass(frozen=True)
class Sample:
    """One (source sequence, target string) pair with its syntax tree."""

    id: int
    tree: SyntaxTree
    src: tuple[str, ...]
    tgt: tuple[str, ...]
    stats: SequenceStats

    @classmethod
    def from_tree(cls, sample_id: int, tree: SyntaxTree) -> "Sample":
        src = tuple(t.text for t in render(tree))
        return cls(sample_id, tree, src, evaluate(tree), stats(tree))

    def src_text(self) -> str:
        return " ".join(self.src)

    def tgt_text(self) -> str:
        return " ".join(self.tgt)


@dataclass
class Corpus:
    samples: list[Sample]
    seed: int | None = None
    params: GrammarParams | None = None
    splits: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.samples}

    def subset(self, ids: Iterable[int]) -> "Corpus":
        table = self.by_id()
        return Corpus([table[i] for i in ids], seed=self.seed, params=self.params)

    def split(self, name: str) -> "Corpus":
        return self.subset(self.splits[name])


def _renormalise(pairs: Sequence[tuple[str, float]]) -> tuple[list[str], list[float]]:
    names = [n for n, _ in pairs]
    weights = [w for _, w in pairs]
    total = sum(weights)
    if total <= 0:
        weights = [1.0] * len(weights)
    return names, weights


def sample_tree(
    params: GrammarParams,
    rng: random.Random,
    *,
    alphabet: Alphabet | None = None,
    max_recursion: int = MAX_RECURSION_DEFAULT,
    force_function: bool = True,
    max_nodes: int | None = None,
    registry: FunctionRegistry = DEFAULT_REGISTRY,
) -> SyntaxTree:
    """Draw one syntax tree.

    The top-level position is forced to expand into a function call unless
    ``force_function`` is off, so every sample contains at least one
    function.  ``max_recursion`` forces a leaf at that nesting depth and
    ``max_nodes`` caps the total number of expanded positions; both guards
    exist for pathological parameter draws, not for normal operation.
    """
    alphabet = alphabet or Alphabet.default()
    unary_names, unary_w = _renormalise(
        [(n, params.fn_weights.get(n, 0.0)) for n in registry.unary_names()]
    )
    binary_names, binary_w = _renormalise(
        [(n, params.fn_weights.get(n, 0.0)) for n in registry.binary_names()]
    )
    lengths = sorted(params.arg_len_dist)
    length_w = [params.arg_len_dist[k] for k in lengths]
    expanded = 0

    def make_leaf() -> Leaf:
        n = rng.choices(lengths, weights=length_w)[0]
        return Leaf(tuple(rng.choice(alphabet.symbols) for _ in range(n)))

    def expand(depth: int, force_fn: bool) -> SyntaxTree:
        nonlocal expanded
        expanded += 1
        budget_hit = max_nodes is not None and expanded > max_nodes
        if depth >= max_recursion or budget_hit:
            return make_leaf()
        if force_fn:
            kinds, weights = ["unary", "binary"], [params.p_unary, params.p_binary]
            if params.p_unary + params.p_binary <= 0:
                weights = [1.0, 1.0]
        else:
            kinds = ["unary", "binary", "leaf"]
            weights = [params.p_unary, params.p_binary, params.p_leaf]
        kind = rng.choices(kinds, weights=weights)[0]
        if kind == "leaf":
            return make_leaf()
        if kind == "unary":
            fn = registry.lookup(rng.choices(unary_names, weights=unary_w)[0])
            return Apply(fn, (expand(depth + 1, False),))
        fn = registry.lookup(rng.choices(binary_names, weights=binary_w)[0])
        left = expand(depth + 1, False)
        right = expand(depth + 1, False)
        return Apply(fn, (left, right))

    return expand(0, force_function)


def leaf_tuples(tree: SyntaxTree) -> list[tuple[str, ...]]:
    """All string arguments of a tree, in left-to-right order."""
    out: list[tuple[str, ...]] = []

    def walk(node: SyntaxTree) -> None:
        if isinstance(node, Leaf):
            out.append(node.symbols)
        else:
            for a in node.args:
                walk(a)

    walk(tree)
    return out


def _sample_ok(
    tree: SyntaxTree,
    src: tuple[str, ...],
    seen_src: set[tuple[str, ...]],
    used_args: set[tuple[str, ...]],
) -> bool:
    if src in seen_src:
        return False
    tuples = leaf_tuples(tree)
    literals = [s for t in tuples for s in t]
    if len(set(literals)) != len(literals):
        return False
    multi = [t for t in tuples if len(t) >= 2]
    if any(t in used_args for t in multi):
        return False
    # a long argument reused twice inside one sample also counts as reuse
    return len(set(multi)) == len(multi)


def generate_corpus(
    params: GrammarParams,
    n: int,
    alphabet: Alphabet | None = None,
    rng: random.Random | None = None,
    *,
    seed: int | None = None,
    max_recursion: int = MAX_RECURSION_DEFAULT,
    max_rejects: int = 100_000,
) -> Corpus:
    """Sample ``n`` distinct pairs under the uniqueness constraints.

    Constraints: sources are pairwise distinct, no literal occurs twice
    within one sample, and every string argument of two or more symbols is
    used at most once across the entire corpus.  Violations are resolved by
    rejection; ``max_rejects`` consecutive failures raise
    ExhaustedUniqueArguments.
    """
    alphabet = alphabet or Alphabet.default()
    if rng is None:
        rng = random.Random(seed)
    samples: list[Sample] = []
    seen_src: set[tuple[str, ...]] = set()
    used_args: set[tuple[str, ...]] = set()
    rejects = 0
    while len(samples) < n:
        tree = sample_tree(
            params, rng, alphabet=alphabet, max_recursion=max_recursion
        )
        src = tuple(t.text for t in render(tree))
        if not _sample_ok(tree, src, seen_src, used_args):
            rejects += 1
            if rejects > max_rejects:
                raise ExhaustedUniqueArguments(
                    f"{max_rejects} consecutive rejections at {len(samples)} samples"
                )
            continue
        rejects = 0
        samples.append(Sample.from_tree(len(samples), tree))
        seen_src.add(src)
        used_args.update(t for t in leaf_tuples(tree) if len(t) >= 2)
    return Corpus(samples, seed=seed, params=params)


def split_corpus(
    corpus: Corpus,
    fractions: tuple[float, float, float] = (0.85, 0.05, 0.10),
    rng: random.Random | None = None,
) -> Corpus:
    """Partition into train/valid/test splits, recorded on the corpus.

    Split sizes are floor-based on the valid and test fractions; any
    remainder goes to train.
    """
    if rng is None:
        rng = random.Random(0)
    f_train, f_valid, f_test = fractions
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be non-negative and sum to 1")
    ids = [s.id for s in corpus.samples]
    shuffled = rng.sample(ids, len(ids))
    n = len(ids)
    n_valid = int(n * f_valid)
    n_test = int(n * f_test)
    n_train = n - n_valid - n_test
    corpus.splits = {
        "train": tuple(shuffled[:n_train]),
        "valid": tuple(shuffled[n_train:n_train + n_valid]),
        "test": tuple(shuffled[n_train + n_valid:]),
    }
    return corpus


def make_function_difficulty_corpora(
    unary_bases: Sequence[Sequence[str]],
    binary_bases: Sequence[tuple[Sequence[str], Sequence[str]]],
    registry: FunctionRegistry = DEFAULT_REGISTRY,
) -> dict[str, Corpus]:
    """Per-function probe corpora over shared base inputs.

    Each unary function F is probed on ``F <base>`` for every unary base;
    each binary function on ``F <first> , <second>`` for every base pair.
    Shared bases make the per-function accuracies comparable.
    """
    corpora: dict[str, Corpus] = {}
    for name in registry.unary_names():
        samples = []
        for i, base in enumerate(unary_bases):
            tree = parse([name, *base], registry)
            samples.append(Sample.from_tree(i, tree))
        corpora[name] = Corpus(samples)
    for name in registry.binary_names():
        samples = []
        for i, (first, second) in enumerate(binary_bases):
            tree = parse([name, *first, ",", *second], registry)
            samples.append(Sample.from_tree(i, tree))
        corpora[name] = Corpus(samples)
    return corpora


def make_primitive_length_corpus(
    fn_name: str,
    arg_lengths: Sequence[int],
    per_length: int,
    alphabet: Alphabet | None = None,
    rng: random.Random | None = None,
    *,
    vary_arg: int = 0,
    fixed_len_range: tuple[int, int] = (1, 5),
    registry: FunctionRegistry = DEFAULT_REGISTRY,
) -> Corpus:
    """Single-function samples whose argument length sweeps ``arg_lengths``.

    For binary functions only the argument selected by ``vary_arg`` takes
    the probed length; the other argument keeps an ordinary length drawn
    from ``fixed_len_range``.  Literals never repeat within a sample.
    """
    alphabet = alphabet or Alphabet.default()
    rng = rng or random.Random(0)
    fn = registry.lookup(fn_name)
    if fn.arity == 2 and vary_arg not in (0, 1):
        raise ValueError("vary_arg must be 0 or 1")
    samples: list[Sample] = []
    for length in arg_lengths:
        if length < 1:
            raise ValueError("argument lengths must be at least 1")
        for _ in range(per_length):
            if fn.arity == 1:
                syms = rng.sample(alphabet.symbols, length)
                tree: SyntaxTree = Apply(fn, (Leaf(tuple(syms)),))
            else:
                other = rng.randint(*fixed_len_range)
                lens = [length, other] if vary_arg == 0 else [other, length]
                syms = rng.sample(alphabet.symbols, sum(lens))
                first = Leaf(tuple(syms[: lens[0]]))
                second = Leaf(tuple(syms[lens[0]:]))
                tree = Apply(fn, (first, second))
            samples.append(Sample.from_tree(len(samples), tree))
    return Corpus(samples)


def validate_corpus(
    corpus: Corpus, registry: FunctionRegistry = DEFAULT_REGISTRY
) -> list[str]:
    """Independent audit of a corpus; returns human-readable violations.

    Re-parses every source, re-evaluates every target, and re-checks the
    uniqueness constraints and split bookkeeping from scratch.
    """
    problems: list[str] = []
    seen_src: dict[tuple[str, ...], int] = {}
    used_args: dict[tuple[str, ...], int] = {}
    ids = set()
    for s in corpus.samples:
        if s.id in ids:
            problems.append(f"sample {s.id}: duplicate id")
        ids.add(s.id)
        try:
            tree = parse(list(s.src), registry)
        except Exception as exc:  # noqa: BLE001 - report, do not crash the audit
            problems.append(f"sample {s.id}: src does not parse ({exc})")
            continue
        if tree != s.tree:
            problems.append(f"sample {s.id}: recorded tree does not match src")
        if evaluate(tree) != s.tgt:
            problems.append(f"sample {s.id}: tgt does not match evaluation")
        if stats(tree) != s.stats:
            problems.append(f"sample {s.id}: recorded stats are stale")
        if s.src in seen_src:
            problems.append(
                f"sample {s.id}: duplicate src (first seen in {seen_src[s.src]})"
            )
        else:
            seen_src[s.src] = s.id
        tuples = leaf_tuples(tree)
        literals = [sym for t in tuples for sym in t]
        if len(set(literals)) != len(literals):
            problems.append(f"sample {s.id}: repeated literal within sample")
        for t in tuples:
            if len(t) < 2:
                continue
            if t in used_args and used_args[t] != s.id:
                problems.append(
                    f"sample {s.id}: string argument {' '.join(t)!r} reused "
                    f"(first seen in {used_args[t]})"
                )
            elif t in used_args:
                problems.append(
                    f"sample {s.id}: string argument {' '.join(t)!r} used twice "
                    "within the sample"
                )
            else:
                used_args[t] = s.id
    if corpus.splits:
        all_split_ids: list[int] = []
        for name, split_ids in corpus.splits.items():
            unknown = set(split_ids) - ids
            if unknown:
                problems.append(f"split {name}: unknown ids {sorted(unknown)[:5]}")
            all_split_ids.extend(split_ids)
        if len(all_split_ids) != len(set(all_split_ids)):
            problems.append("splits overlap")
        if set(all_split_ids) != ids:
            problems.append("splits do not cover the corpus")
    return problems


# Calibrated against data/reference_length_depth.csv; the provenance run is
# scripts/calibrate_default_grammar.py.  The four functions appearing in the
# held-out bigrams (swap, repeat, append, remove_second) are upweighted so a
# 100k corpus yields a full 10k bigram-containing test split with margin.
_DEFAULT_PARAMS = GrammarParams(
    p_unary=0.46,
    p_binary=0.19,
    p_leaf=0.35,
    fn_weights={
        "copy": 0.14,
        "reverse": 0.14,
        "shift": 0.14,
        "echo": 0.14,
        "swap": 0.22,
        "repeat": 0.22,
        "append": 0.30,
        "prepend": 0.20,
        "remove_first": 0.20,
        "remove_second": 0.30,
    },
    arg_len_dist={1: 0.2, 2: 0.2, 3: 0.2, 4: 0.2, 5: 0.2},
    max_arg_len=5,
)
