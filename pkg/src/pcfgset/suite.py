"""Constructors for the five compositionality tests.

Each constructor redistributes or rewrites a generated corpus:
systematicity holds out function pairs, productivity holds out long
compositions, substitutivity introduces synonyms, localism produces
unroll plans for step-by-step evaluation, and overgeneralisation plants
exception targets for selected function pairs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .generation import Alphabet, Corpus, Sample, leaf_tuples
from .language import (
    DEFAULT_REGISTRY,
    Apply,
    FunctionRegistry,
    Leaf,
    SyntaxTree,
    apply_function,
    evaluate,
    parse,
    render,
)
from .naturalise import round_half_up


class InsufficientPositives(Exception):
    """Not enough pair-containing samples to fill the requested test set."""


class EmptySide(Exception):
    """A split constructor produced an empty train or test side."""


@dataclass(frozen=True)
class HeldOutPair:
    """A function bigram: ``outer`` immediately followed by ``inner``."""

    outer: str
    inner: str

    def __post_init__(self):
        for name in (self.outer, self.inner):
            if name not in DEFAULT_REGISTRY:
                raise ValueError(f"unknown function {name!r}")


DEFAULT_HELD_OUT_PAIRS = (
    HeldOutPair("swap", "repeat"),
    HeldOutPair("append", "remove_second"),
    HeldOutPair("repeat", "remove_second"),
    HeldOutPair("append", "swap"),
)


def contains_pair(src: Sequence[str], pairs: Iterable[HeldOutPair]) -> bool:
    """True when any pair occurs as adjacent tokens in the source.

    Adjacency of two function tokens in this grammar happens exactly when
    the second heads the first's (first) argument, so a bigram scan is a
    faithful containment test.
    """
    wanted = {(p.outer, p.inner) for p in pairs}
    return any((a, b) in wanted for a, b in zip(src, src[1:]))


def systematicity_split(
    corpus: Corpus,
    pairs: Sequence[HeldOutPair] = DEFAULT_HELD_OUT_PAIRS,
    test_size: int = 10_000,
    rng: random.Random | None = None,
) -> tuple[Corpus, Corpus]:
    """Hold out every sample containing a listed pair; draw the test set.

    Train keeps all pair-free samples.  The test set is a uniform draw of
    ``test_size`` pair-containing samples; fewer available positives raise
    InsufficientPositives.
    """
    rng = rng or random.Random(0)
    positives = [s for s in corpus if contains_pair(s.src, pairs)]
    negatives = [s for s in corpus if not contains_pair(s.src, pairs)]
    if not pairs:
        return Corpus(negatives, seed=corpus.seed, params=corpus.params), Corpus([])
    if len(positives) < test_size:
        raise InsufficientPositives(
            f"need {test_size} pair-containing samples, found {len(positives)}"
        )
    chosen = rng.sample(range(len(positives)), test_size)
    test = [positives[i] for i in sorted(chosen)]
    return (
        Corpus(negatives, seed=corpus.seed, params=corpus.params),
        Corpus(test, seed=corpus.seed, params=corpus.params),
    )


def productivity_split(
    corpus: Corpus, threshold: int = 8
) -> tuple[Corpus, Corpus]:
    """Train on compositions of at most ``threshold`` functions, test above."""
    train = [s for s in corpus if s.stats.num_functions <= threshold]
    test = [s for s in corpus if s.stats.num_functions > threshold]
    if not train or not test:
        raise EmptySide(
            f"threshold {threshold} leaves train={len(train)} test={len(test)}"
        )
    return (
        Corpus(train, seed=corpus.seed, params=corpus.params),
        Corpus(test, seed=corpus.seed, params=corpus.params),
    )


@dataclass(frozen=True)
class SynonymMap:
    """Maps base function names to their synonym names."""

    mapping: tuple[tuple[str, str], ...]

    def __post_init__(self):
        syns = [s for _, s in self.mapping]
        if len(set(syns)) != len(syns):
            raise ValueError("synonym names must be distinct")

    @classmethod
    def default(cls) -> "SynonymMap":
        return cls.from_dict(
            {
                "swap": "swap_syn",
                "repeat": "repeat_syn",
                "append": "append_syn",
                "remove_second": "remove_second_syn",
            }
        )

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "SynonymMap":
        return cls(tuple(d.items()))

    def as_dict(self) -> dict[str, str]:
        return dict(self.mapping)

    def bases(self) -> tuple[str, ...]:
        return tuple(b for b, _ in self.mapping)

    def registry(self, base: FunctionRegistry = DEFAULT_REGISTRY) -> FunctionRegistry:
        return base.with_synonyms(self.as_dict())


def substitutivity_equal(
    train: Corpus,
    synonyms: SynonymMap | None = None,
    rng: random.Random | None = None,
) -> tuple[Corpus, dict[str, tuple[int, int]]]:
    """Rewrite exactly half of each base function's occurrences (floor).

    Occurrences are counted token-wise across the whole train side; the
    rewritten occurrences are a uniform draw.  Targets stay untouched
    because a synonym means the same thing.  Returns the rewritten corpus
    and an audit mapping base -> (rewritten, total).
    """
    synonyms = synonyms or SynonymMap.default()
    rng = rng or random.Random(0)
    registry = synonyms.registry()
    replacements: dict[int, dict[int, str]] = {}
    audit: dict[str, tuple[int, int]] = {}
    for base, syn in synonyms.mapping:
        occurrences = [
            (pos, t_idx)
            for pos, s in enumerate(train.samples)
            for t_idx, tok in enumerate(s.src)
            if tok == base
        ]
        k = len(occurrences) // 2
        chosen = rng.sample(occurrences, k) if k else []
        for pos, t_idx in chosen:
            replacements.setdefault(pos, {})[t_idx] = syn
        audit[base] = (k, len(occurrences))
    rewritten: list[Sample] = []
    for pos, s in enumerate(train.samples):
        subs = replacements.get(pos)
        if not subs:
            rewritten.append(s)
            continue
        src = tuple(subs.get(i, tok) for i, tok in enumerate(s.src))
        tree = parse(src, registry)
        new = Sample.from_tree(s.id, tree)
        assert new.tgt == s.tgt, "synonym rewriting must not change the target"
        rewritten.append(new)
    return Corpus(rewritten, seed=train.seed, params=train.params), audit


def substitutivity_primitive(
    train: Corpus,
    synonyms: SynonymMap | None = None,
    fraction: float = 0.001,
    alphabet: Alphabet | None = None,
    rng: random.Random | None = None,
    *,
    arg_len_range: tuple[int, int] = (1, 5),
    max_attempts: int = 10_000,
) -> tuple[Corpus, dict[str, int]]:
    """Add primitive synonym samples instead of rewriting.

    Per base function, round(fraction * |train|) fresh one-function
    samples ``F_syn <args>`` are appended, with arguments respecting the
    corpus constraints (no literal repeats inside a sample, no reuse of a
    multi-symbol argument seen anywhere in train or among the additions).
    """
    synonyms = synonyms or SynonymMap.default()
    alphabet = alphabet or Alphabet.default()
    rng = rng or random.Random(0)
    registry = synonyms.registry()
    per_base = round_half_up(fraction * len(train))
    used_args = {t for s in train for t in leaf_tuples(s.tree) if len(t) >= 2}
    seen_src = {s.src for s in train}
    next_id = max((s.id for s in train), default=-1) + 1
    added: list[Sample] = []
    counts: dict[str, int] = {}
    for base, syn in synonyms.mapping:
        fn = registry.lookup(syn)
        made = 0
        attempts = 0
        while made < per_base:
            attempts += 1
            if attempts > max_attempts:
                raise RuntimeError(f"could not place fresh arguments for {syn}")
            if fn.arity == 1:
                n = rng.randint(*arg_len_range)
                syms = rng.sample(alphabet.symbols, n)
                tree: SyntaxTree = Apply(fn, (Leaf(tuple(syms)),))
            else:
                n1 = rng.randint(*arg_len_range)
                n2 = rng.randint(*arg_len_range)
                syms = rng.sample(alphabet.symbols, n1 + n2)
                tree = Apply(fn, (Leaf(tuple(syms[:n1])), Leaf(tuple(syms[n1:]))))
            tuples = [t for t in leaf_tuples(tree) if len(t) >= 2]
            src = tuple(t.text for t in render(tree))
            if src in seen_src or any(t in used_args for t in tuples):
                continue
            if len(tuples) == 2 and tuples[0] == tuples[1]:
                continue
            sample = Sample.from_tree(next_id, tree)
            next_id += 1
            added.append(sample)
            seen_src.add(src)
            used_args.update(tuples)
            made += 1
            attempts = 0
        counts[base] = made
    merged = Corpus(
        list(train.samples) + added, seed=train.seed, params=train.params
    )
    return merged, counts


@dataclass(frozen=True)
class ConsistencyPair:
    """One test item rendered both with base functions and with synonyms."""

    id: int
    src_base: tuple[str, ...]
    src_syn: tuple[str, ...]
    tgt: tuple[str, ...]


def make_consistency_pairs(
    testset: Corpus, synonyms: SynonymMap | None = None
) -> tuple[list[ConsistencyPair], int]:
    """Pair each test source with its fully synonym-substituted variant.

    Samples containing none of the mapped functions are skipped; the skip
    count is returned alongside the pairs.
    """
    synonyms = synonyms or SynonymMap.default()
    table = synonyms.as_dict()
    pairs: list[ConsistencyPair] = []
    skipped = 0
    for s in testset:
        syn_src = tuple(table.get(tok, tok) for tok in s.src)
        if syn_src == s.src:
            skipped += 1
            continue
        pairs.append(ConsistencyPair(s.id, s.src, syn_src, s.tgt))
    return pairs, skipped


# --- overgeneralisation ------------------------------------------------------

ExceptionRemap = dict[tuple[str, str], tuple[str, str]]

DEFAULT_EXCEPTION_REMAP: ExceptionRemap = {
    ("reverse", "echo"): ("echo", "copy"),
    ("prepend", "remove_first"): ("remove_second", "append"),
    ("echo", "remove_first"): ("copy", "append"),
    ("prepend", "reverse"): ("remove_second", "echo"),
}


def _check_remap(remap: ExceptionRemap) -> None:
    for (outer, inner), (outer_new, inner_new) in remap.items():
        for a, b in ((outer, outer_new), (inner, inner_new)):
            if DEFAULT_REGISTRY.lookup(a).arity != DEFAULT_REGISTRY.lookup(b).arity:
                raise ValueError(f"remap {a}->{b} changes arity")


def exception_evaluate(
    tree: SyntaxTree, remap: ExceptionRemap | None = None
) -> tuple[str, ...]:
    """Evaluate with pair exceptions applied.

    Wherever a remapped pair occurs as a function immediately followed by
    another function (parent and first child), both members take their
    replacement meanings for that occurrence.  Matching is decided on the
    original tree, so overlapping pairs each contribute a substitution; a
    custom table whose overlaps disagree on some member is rejected.
    """
    remap = DEFAULT_EXCEPTION_REMAP if remap is None else remap
    _check_remap(remap)

    def ev(node: SyntaxTree, forced: str | None) -> tuple[str, ...]:
        if isinstance(node, Leaf):
            return node.symbols
        name = node.function.name
        effective = forced
        child_forced: list[str | None] = [None] * len(node.args)
        first = node.args[0]
        if isinstance(first, Apply):
            key = (name, first.function.name)
            if key in remap:
                outer_new, inner_new = remap[key]
                if effective is not None and effective != outer_new:
                    raise ValueError(
                        f"conflicting exception remaps for {name!r}: "
                        f"{effective!r} vs {outer_new!r}"
                    )
                effective = outer_new
                child_forced[0] = inner_new
        fn = DEFAULT_REGISTRY.lookup(effective) if effective else node.function
        vals = [ev(a, child_forced[i]) for i, a in enumerate(node.args)]
        return apply_function(fn, vals)

    return ev(tree, None)


@dataclass(frozen=True)
class ExceptionEntry:
    sample_id: int
    src: tuple[str, ...]
    original_tgt: tuple[str, ...]
    exception_tgt: tuple[str, ...]
    pair: tuple[str, str]


def _synthesise_pair_sample(
    outer: str,
    inner: str,
    alphabet: Alphabet,
    rng: random.Random,
    arg_len_range: tuple[int, int] = (1, 5),
) -> SyntaxTree:
    """A minimal tree whose source contains ``outer inner`` adjacently."""
    outer_fn = DEFAULT_REGISTRY.lookup(outer)
    inner_fn = DEFAULT_REGISTRY.lookup(inner)
    n_leaves = inner_fn.arity + (1 if outer_fn.arity == 2 else 0)
    lens = [rng.randint(*arg_len_range) for _ in range(n_leaves)]
    syms = rng.sample(alphabet.symbols, sum(lens))
    leaves = []
    start = 0
    for n in lens:
        leaves.append(Leaf(tuple(syms[start:start + n])))
        start += n
    inner_node = Apply(inner_fn, tuple(leaves[: inner_fn.arity]))
    if outer_fn.arity == 1:
        return Apply(outer_fn, (inner_node,))
    return Apply(outer_fn, (inner_node, leaves[-1]))


def exceptions_apply(
    train: Corpus,
    remap: ExceptionRemap | None = None,
    percentage: float = 0.001,
    rng: random.Random | None = None,
    alphabet: Alphabet | None = None,
) -> tuple[Corpus, list[ExceptionEntry]]:
    """Plant exception targets in the train side.

    Per pair, the exception count is round(percentage * occurrences of the
    rarer member function, counted token-wise over train).  That many
    pair-containing samples get their target rewritten to the exception
    interpretation; if too few exist, fresh pair-containing samples are
    synthesised and appended.  A sample serves at most one pair.
    """
    remap = DEFAULT_EXCEPTION_REMAP if remap is None else remap
    _check_remap(remap)
    rng = rng or random.Random(0)
    alphabet = alphabet or Alphabet.default()
    fn_counts: dict[str, int] = {}
    for s in train:
        for tok in s.src:
            if tok in DEFAULT_REGISTRY:
                fn_counts[tok] = fn_counts.get(tok, 0) + 1
    samples = list(train.samples)
    used_args = {t for s in train for t in leaf_tuples(s.tree) if len(t) >= 2}
    seen_src = {s.src for s in train}
    next_id = max((s.id for s in train), default=-1) + 1
    taken: set[int] = set()
    entries: list[ExceptionEntry] = []

    for (outer, inner) in remap:
        k = round_half_up(
            percentage * min(fn_counts.get(outer, 0), fn_counts.get(inner, 0))
        )
        if k == 0:
            continue
        candidates = [
            pos
            for pos, s in enumerate(samples)
            if pos not in taken
            and contains_pair(s.src, [HeldOutPair(outer, inner)])
        ]
        if len(candidates) >= k:
            chosen = sorted(rng.sample(candidates, k))
        else:
            chosen = list(candidates)
            while len(chosen) < k:
                tree = _synthesise_pair_sample(outer, inner, alphabet, rng)
                tuples = [t for t in leaf_tuples(tree) if len(t) >= 2]
                src = tuple(t.text for t in render(tree))
                if src in seen_src or any(t in used_args for t in tuples):
                    continue
                if len(tuples) >= 2 and len(set(tuples)) != len(tuples):
                    continue
                samples.append(Sample.from_tree(next_id, tree))
                next_id += 1
                seen_src.add(src)
                used_args.update(tuples)
                chosen.append(len(samples) - 1)
        for pos in chosen:
            s = samples[pos]
            exc = exception_evaluate(s.tree, remap)
            samples[pos] = Sample(
                id=s.id, tree=s.tree, src=s.src, tgt=exc, stats=s.stats
            )
            taken.add(pos)
            entries.append(
                ExceptionEntry(
                    sample_id=s.id,
                    src=s.src,
                    original_tgt=evaluate(s.tree),
                    exception_tgt=exc,
                    pair=(outer, inner),
                )
            )
    return Corpus(samples, seed=train.seed, params=train.params), entries


# --- localism ------------------------------------------------------------------

@dataclass(frozen=True)
class UnrollStep:
    """One function application in an unrolled evaluation.

    ``args`` holds either ("lit", symbols) for string arguments or
    ("step", index) for the output of an earlier step.
    """

    path: tuple[int, ...]
    fn_name: str
    args: tuple[tuple, ...]


@dataclass(frozen=True)
class UnrollPlan:
    src: tuple[str, ...]
    steps: tuple[UnrollStep, ...]

    @property
    def num_steps(self) -> int:
        return len(self.steps)


def build_unroll_plan(tree: SyntaxTree) -> UnrollPlan:
    """Innermost-first evaluation schedule for a tree.

    Steps proceed in rounds: a round takes every application whose
    function arguments were all completed in earlier rounds (innermost
    applications first), left to right.  The final step is the root.
    """
    if isinstance(tree, Leaf):
        raise ValueError("cannot unroll a bare string")
    nodes: list[tuple[tuple[int, ...], Apply]] = []

    def collect(node: SyntaxTree, path: tuple[int, ...]) -> None:
        if isinstance(node, Leaf):
            return
        nodes.append((path, node))
        for i, a in enumerate(node.args):
            collect(a, path + (i,))

    collect(tree, ())
    preorder_index = {path: i for i, (path, _) in enumerate(nodes)}

    rounds: dict[tuple[int, ...], int] = {}

    def round_of(path: tuple[int, ...], node: Apply) -> int:
        if path in rounds:
            return rounds[path]
        sub = [
            round_of(path + (i,), a)
            for i, a in enumerate(node.args)
            if isinstance(a, Apply)
        ]
        r = 1 + max(sub, default=0)
        rounds[path] = r
        return r

    for path, node in nodes:
        round_of(path, node)

    ordered = sorted(nodes, key=lambda pn: (rounds[pn[0]], preorder_index[pn[0]]))
    step_index = {path: i for i, (path, _) in enumerate(ordered)}
    steps = []
    for path, node in ordered:
        args = []
        for i, a in enumerate(node.args):
            if isinstance(a, Leaf):
                args.append(("lit", a.symbols))
            else:
                args.append(("step", step_index[path + (i,)]))
        steps.append(UnrollStep(path=path, fn_name=node.function.name, args=tuple(args)))
    src = tuple(t.text for t in render(tree))
    return UnrollPlan(src=src, steps=tuple(steps))
