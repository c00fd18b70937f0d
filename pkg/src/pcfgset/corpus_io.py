"""Corpus, sidecar and report file formats.

Corpora are stored as line-aligned ``<split>.src`` / ``<split>.tgt`` UTF-8
token files (single-space separation, newline endings) plus a
``manifest.json`` carrying the seed, grammar parameters, split sizes and
content hashes.  Auxiliary artefacts (held-out pairs, synonym maps,
exception sets, unroll plans) are JSON sidecars; evaluation reports are
versioned JSON with CSV breakdowns for plotting.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .generation import Corpus, GrammarParams, Sample
from .harness import EvaluationReport, OverallProfilePoint
from .language import DEFAULT_REGISTRY, FunctionRegistry, parse
from .suite import ExceptionEntry, HeldOutPair, SynonymMap, UnrollPlan, UnrollStep

SCHEMA_VERSION = 1

# canonical split emission order; unknown names follow alphabetically
_SPLIT_ORDER = {"train": 0, "valid": 1, "test": 2}


class ManifestError(Exception):
    """manifest.json is missing, malformed or contradicts the files."""


def _split_sort_key(name: str) -> tuple[int, str]:
    return (_SPLIT_ORDER.get(name, len(_SPLIT_ORDER)), name)


def file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_token_file(path: Path | str, rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(" ".join(row))
            handle.write("\n")


def read_token_file(path: Path | str) -> list[list[str]]:
    with open(path, "r", encoding="utf-8") as handle:
        return [line.split() for line in handle.read().splitlines()]


def write_corpus(
    directory: Path | str,
    corpus: Corpus,
    *,
    extra: Mapping | None = None,
) -> dict:
    """Write split token files and the manifest; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if corpus.splits:
        table = corpus.by_id()
        split_items = sorted(corpus.splits.items(), key=lambda kv: _split_sort_key(kv[0]))
        splits = [(name, [table[i] for i in ids]) for name, ids in split_items]
    else:
        splits = [("all", list(corpus))]
    hashes = {}
    sizes = {}
    for name, samples in splits:
        src_path = directory / f"{name}.src"
        tgt_path = directory / f"{name}.tgt"
        write_token_file(src_path, [s.src for s in samples])
        write_token_file(tgt_path, [s.tgt for s in samples])
        hashes[src_path.name] = file_sha256(src_path)
        hashes[tgt_path.name] = file_sha256(tgt_path)
        sizes[name] = len(samples)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": corpus.seed,
        "params": corpus.params.to_dict() if corpus.params is not None else None,
        "sizes": sizes,
        "hashes": hashes,
    }
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)
    return manifest


def write_json(path: Path | str, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path: Path | str):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def verify_manifest(directory: Path | str) -> list[str]:
    """Check manifest hashes against the files; returns problem strings."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        return [f"{manifest_path}: missing manifest"]
    try:
        manifest = read_json(manifest_path)
    except json.JSONDecodeError as exc:
        return [f"{manifest_path}: not valid JSON ({exc})"]
    problems = []
    hashes = manifest.get("hashes")
    if not isinstance(hashes, dict):
        return [f"{manifest_path}: no hash table"]
    for name, want in sorted(hashes.items()):
        path = directory / name
        if not path.exists():
            problems.append(f"{path}: listed in manifest but missing")
            continue
        got = file_sha256(path)
        if got != want:
            problems.append(f"{path}: hash mismatch (manifest {want[:12]}…, file {got[:12]}…)")
    return problems


def discover_splits(directory: Path | str) -> list[str]:
    directory = Path(directory)
    names = sorted(
        (p.stem for p in directory.glob("*.src")),
        key=_split_sort_key,
    )
    return list(names)


def read_corpus(
    directory: Path | str,
    *,
    registry: FunctionRegistry | None = None,
    splits: Sequence[str] | None = None,
    verify: bool = True,
) -> Corpus:
    """Load a corpus directory back into memory.

    Sources are re-parsed into trees; targets are taken verbatim from the
    .tgt files (they may deliberately disagree with the evaluator, as in
    exception training sets).  When a synonyms.json sidecar is present the
    registry is extended with it automatically.
    """
    directory = Path(directory)
    if verify and (directory / "manifest.json").exists():
        problems = verify_manifest(directory)
        if problems:
            raise ManifestError("; ".join(problems))
    if registry is None:
        registry = registry_for_directory(directory)
    names = list(splits) if splits is not None else discover_splits(directory)
    if not names:
        raise FileNotFoundError(f"{directory}: no .src files found")
    manifest_path = directory / "manifest.json"
    seed = None
    params = None
    if manifest_path.exists():
        manifest = read_json(manifest_path)
        seed = manifest.get("seed")
        raw_params = manifest.get("params")
        if raw_params is not None:
            params = GrammarParams.from_dict(raw_params)
    samples = []
    split_ids: dict[str, tuple[int, ...]] = {}
    next_id = 0
    for name in names:
        srcs = read_token_file(directory / f"{name}.src")
        tgts = read_token_file(directory / f"{name}.tgt")
        if len(srcs) != len(tgts):
            raise ManifestError(
                f"{directory}/{name}: {len(srcs)} src lines vs {len(tgts)} tgt lines"
            )
        ids = []
        for src, tgt in zip(srcs, tgts):
            tree = parse(src, registry)
            base = Sample.from_tree(next_id, tree)
            samples.append(
                Sample(
                    id=next_id,
                    tree=tree,
                    src=base.src,
                    tgt=tuple(tgt),
                    stats=base.stats,
                )
            )
            ids.append(next_id)
            next_id += 1
        split_ids[name] = tuple(ids)
    return Corpus(samples=samples, seed=seed, params=params, splits=split_ids)


def registry_for_directory(
    directory: Path | str,
    base: FunctionRegistry = DEFAULT_REGISTRY,
) -> FunctionRegistry:
    """Extend the registry with the directory's synonym sidecar if present."""
    sidecar = Path(directory) / "synonyms.json"
    if sidecar.exists():
        return read_synonyms(sidecar).registry(base)
    return base


# ---------------------------------------------------------------------------
# sidecars


def write_pairs(path: Path | str, pairs: Sequence[HeldOutPair]) -> None:
    write_json(path, [{"outer": p.outer, "inner": p.inner} for p in pairs])


def read_pairs(path: Path | str) -> list[HeldOutPair]:
    return [HeldOutPair(row["outer"], row["inner"]) for row in read_json(path)]


def write_synonyms(path: Path | str, synonyms: SynonymMap) -> None:
    write_json(path, synonyms.as_dict())


def read_synonyms(path: Path | str) -> SynonymMap:
    return SynonymMap.from_dict(read_json(path))


def write_exceptions(path: Path | str, entries: Sequence[ExceptionEntry]) -> None:
    write_json(
        path,
        [
            {
                "sample_id": e.sample_id,
                "src": " ".join(e.src),
                "original_tgt": " ".join(e.original_tgt),
                "exception_tgt": " ".join(e.exception_tgt),
                "pair": list(e.pair),
            }
            for e in entries
        ],
    )


def read_exceptions(path: Path | str) -> list[ExceptionEntry]:
    entries = []
    for row in read_json(path):
        entries.append(
            ExceptionEntry(
                sample_id=int(row["sample_id"]),
                src=tuple(row["src"].split()),
                original_tgt=tuple(row["original_tgt"].split()),
                exception_tgt=tuple(row["exception_tgt"].split()),
                pair=(row["pair"][0], row["pair"][1]),
            )
        )
    return entries


def write_unroll_plans(path: Path | str, plans: Sequence[UnrollPlan]) -> None:
    payload = []
    for plan in plans:
        steps = []
        for step in plan.steps:
            args = []
            for kind, value in step.args:
                if kind == "lit":
                    args.append({"kind": "lit", "symbols": " ".join(value)})
                else:
                    args.append({"kind": "step", "index": value})
            steps.append({"path": list(step.path), "fn": step.fn_name, "args": args})
        payload.append({"src": " ".join(plan.src), "steps": steps})
    write_json(path, payload)


def read_unroll_plans(path: Path | str) -> list[UnrollPlan]:
    plans = []
    for row in read_json(path):
        steps = []
        for raw in row["steps"]:
            args = []
            for arg in raw["args"]:
                if arg["kind"] == "lit":
                    args.append(("lit", tuple(arg["symbols"].split())))
                else:
                    args.append(("step", int(arg["index"])))
            steps.append(
                UnrollStep(path=tuple(raw["path"]), fn_name=raw["fn"], args=tuple(args))
            )
        plans.append(UnrollPlan(src=tuple(row["src"].split()), steps=tuple(steps)))
    return plans


# ---------------------------------------------------------------------------
# predictions


def write_predictions(path: Path | str, predictions: Iterable[Sequence[str] | None]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for prediction in predictions:
            handle.write("" if prediction is None else " ".join(prediction))
            handle.write("\n")


def read_predictions(path: Path | str) -> list[list[str]]:
    return read_token_file(path)


_CHECKPOINT_RE = re.compile(r"^(\d+)_(.+)\.pred$")


def read_checkpoint_predictions(directory: Path | str) -> list[tuple[str, list[list[str]]]]:
    """Load `<ordinal>_<label>.pred` files in ordinal order."""
    directory = Path(directory)
    found = []
    for path in directory.glob("*.pred"):
        match = _CHECKPOINT_RE.match(path.name)
        if not match:
            raise ValueError(
                f"{path}: checkpoint files must be named <ordinal>_<label>.pred"
            )
        found.append((int(match.group(1)), match.group(2), path))
    if not found:
        raise FileNotFoundError(f"{directory}: no .pred files found")
    found.sort(key=lambda item: (item[0], item[1]))
    return [(label, read_predictions(path)) for _, label, path in found]


# ---------------------------------------------------------------------------
# reports


def write_report(path: Path | str, report: EvaluationReport | dict) -> None:
    payload = report.to_dict() if isinstance(report, EvaluationReport) else dict(report)
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    write_json(path, payload)


def write_strata_csv(path: Path | str, report: EvaluationReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["family", "label", "mean", "count"])
        for family in sorted(report.strata):
            rows = report.strata[family]
            for label in sorted(rows, key=str):
                mean, count = rows[label]
                writer.writerow([family, label, f"{mean:.9f}", count])


def write_profile_csv(path: Path | str, profile: Sequence[OverallProfilePoint]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["checkpoint", "overgeneralisation_frac", "memorisation_frac", "other_frac"]
        )
        for point in profile:
            writer.writerow(
                [
                    point.checkpoint,
                    f"{point.overgeneralisation_frac:.9f}",
                    f"{point.memorisation_frac:.9f}",
                    f"{point.other_frac:.9f}",
                ]
            )


def write_grid_csv(
    path: Path | str, grid: Mapping[tuple[str, int], tuple[float, int]]
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["function", "length", "accuracy", "count"])
        for fn, length in sorted(grid):
            mean, count = grid[(fn, length)]
            writer.writerow([fn, length, f"{mean:.9f}", count])


def write_kv_csv(path: Path | str, values: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["key", "value"])
        for key in sorted(values):
            value = values[key]
            writer.writerow([key, "" if value is None else value])


def write_params(path: Path | str, params: GrammarParams) -> None:
    write_json(path, params.to_dict())


def read_params(path: Path | str) -> GrammarParams:
    return GrammarParams.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# validation


def validate_corpus_files(
    directory: Path | str,
    *,
    registry: FunctionRegistry | None = None,
    exceptions: Sequence[ExceptionEntry] | None = None,
) -> list[str]:
    """Audit corpus files; returns line-addressed violation strings.

    Every source line is re-parsed and re-evaluated against its target
    line.  Target mismatches are excused only when an exception entry with
    the same source prescribes exactly that target.  Source uniqueness and
    leaf-argument constraints are checked across all splits.
    """
    from .generation import leaf_tuples
    from .language import LanguageError, evaluate

    directory = Path(directory)
    problems = list(verify_manifest(directory)) if (directory / "manifest.json").exists() else []
    if registry is None:
        registry = registry_for_directory(directory)
    excused = {}
    if exceptions:
        for entry in exceptions:
            excused[" ".join(entry.src)] = " ".join(entry.exception_tgt)
    names = discover_splits(directory)
    if not names:
        problems.append(f"{directory}: no .src files found")
        return problems
    seen_src: dict[str, str] = {}
    seen_args: dict[tuple[str, ...], str] = {}
    for name in names:
        src_rows = read_token_file(directory / f"{name}.src")
        tgt_rows = read_token_file(directory / f"{name}.tgt")
        if len(src_rows) != len(tgt_rows):
            problems.append(
                f"{name}: {len(src_rows)} src lines vs {len(tgt_rows)} tgt lines"
            )
        for lineno, (src, tgt) in enumerate(zip(src_rows, tgt_rows), start=1):
            where = f"{name}.src:{lineno}"
            text = " ".join(src)
            try:
                tree = parse(src, registry)
            except LanguageError as exc:
                problems.append(f"{where}: does not parse ({exc})")
                continue
            want = evaluate(tree)
            if tuple(tgt) != want:
                excuse = excused.get(text)
                if excuse is None or excuse != " ".join(tgt):
                    problems.append(
                        f"{name}.tgt:{lineno}: target does not match evaluation"
                    )
            if text in seen_src:
                problems.append(f"{where}: duplicate source (also at {seen_src[text]})")
            else:
                seen_src[text] = where
            leaves = leaf_tuples(tree)
            if len(set(leaves)) != len(leaves):
                problems.append(f"{where}: repeated literal argument within sample")
            for leaf in {l for l in leaves if len(l) >= 2}:
                if leaf in seen_args:
                    problems.append(
                        f"{where}: argument {' '.join(leaf)!r} reused (also at {seen_args[leaf]})"
                    )
                else:
                    seen_args[leaf] = where
    return problems
