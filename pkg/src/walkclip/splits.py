"""Grouped hold-out and stratified grouped k-fold over score quartiles.

Everything works on group ids so augmented copies of one location always
land in the same partition.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datamodel import Dataset


@dataclass(frozen=True)
class QuartileBins:
    bins: dict[str, int]
    edges: tuple[float, float, float]
    degenerate: bool


@dataclass(frozen=True)
class SplitPlan:
    test_group_ids: frozenset[str]
    folds: tuple[frozenset[str], ...]
    seed: int
    bin_edges: tuple[float, float, float]
    test_fraction: float = 0.15

    def __post_init__(self):
        seen = set(self.test_group_ids)
        for fold in self.folds:
            if seen & fold:
                raise ValueError("split partitions overlap")
            seen |= fold

    @property
    def train_group_ids(self) -> frozenset[str]:
        return frozenset().union(*self.folds) if self.folds else frozenset()

    def label_of(self, group_id: str) -> str:
        if group_id in self.test_group_ids:
            return "test"
        for f, fold in enumerate(self.folds):
            if group_id in fold:
                return f"fold{f}"
        raise KeyError(group_id)


def _group_table(ds: Dataset) -> tuple[list[str], dict[str, float], Counter]:
    scores: dict[str, float] = {}
    for r in ds.records:
        scores.setdefault(r.group_id, r.walk_score)
    counts = Counter(r.group_id for r in ds.records)
    return sorted(scores), scores, counts


def quartile_bins_from_scores(scores: Mapping[str, float]) -> QuartileBins:
    if len(scores) < 4:
        raise ValueError(f"need at least 4 groups for quartile bins, got {len(scores)}")
    values = np.array(list(scores.values()), dtype=np.float64)
    edges = tuple(float(e) for e in np.percentile(values, [25, 50, 75], method="linear"))
    degenerate = len(set(edges)) < 3
    # right-closed: bin b holds edges[b-1] < s <= edges[b]
    bins = {g: int(np.searchsorted(edges, s, side="left")) for g, s in scores.items()}
    return QuartileBins(bins, edges, degenerate)  # type: ignore[arg-type]


def quartile_bins(ds: Dataset) -> QuartileBins:
    """Bins from the 25/50/75th percentiles of one score per group."""
    _, scores, _ = _group_table(ds)
    return quartile_bins_from_scores(scores)


def group_shuffle_split(ds: Dataset, test_fraction: float = 0.15, seed: int = 0) -> tuple[frozenset[str], frozenset[str]]:
    """Seeded shuffle of groups; take groups until the record share reaches
    ``test_fraction``. Returns (train groups, test groups)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    groups, _, counts = _group_table(ds)
    if len(groups) < 2:
        raise ValueError("need at least two groups to split")
    order = np.random.default_rng(seed).permutation(len(groups))
    need = test_fraction * len(ds)
    test: list[str] = []
    taken = 0
    for i in order:
        if taken >= need - 1e-9:
            break
        test.append(groups[i])
        taken += counts[groups[i]]
    if len(test) == len(groups):
        # one oversized group cannot leave an empty training side
        test.pop()
    test_set = frozenset(test)
    return frozenset(groups) - test_set, test_set


def stratified_group_kfold(
    groups: Mapping[str, int], counts: Mapping[str, int], k: int = 5, n_bins: int = 4
) -> tuple[frozenset[str], ...]:
    """Greedy balanced assignment of groups to ``k`` folds.

    ``groups`` maps group id to bin, ``counts`` maps group id to record count.
    Groups are visited by (count desc, id asc); each goes to the fold whose
    bin-count vector gets closest (summed squared deviation) to the per-fold
    target ``bin_total / k``. Ties go to the fold with fewer records, then
    to the lowest fold index.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(groups):
        raise ValueError(f"k={k} exceeds the number of groups ({len(groups)})")
    totals = np.zeros(n_bins)
    for g, b in groups.items():
        totals[b] += counts[g]
    target = totals / k
    fill = np.zeros((k, n_bins))
    members: list[list[str]] = [[] for _ in range(k)]
    for g in sorted(groups, key=lambda g: (-counts[g], g)):
        b, c = groups[g], counts[g]
        # change in total squared deviation if g joins each fold
        delta = (fill[:, b] + c - target[b]) ** 2 - (fill[:, b] - target[b]) ** 2
        f = min(range(k), key=lambda j: (delta[j], fill[j].sum(), j))
        fill[f, b] += c
        members[f].append(g)
    return tuple(frozenset(m) for m in members)


def make_split_plan(ds: Dataset, test_fraction: float = 0.15, k: int = 5, seed: int = 0) -> SplitPlan:
    train, test = group_shuffle_split(ds, test_fraction, seed)
    _, scores, counts = _group_table(ds)
    qb = quartile_bins_from_scores({g: scores[g] for g in train})
    folds = stratified_group_kfold({g: qb.bins[g] for g in train}, counts, k)
    return SplitPlan(test, folds, seed, qb.edges, test_fraction)


def plan_indices(ds: Dataset, plan: SplitPlan) -> tuple[np.ndarray, list[np.ndarray]]:
    """Record indices of the test partition and of each fold."""
    labels = [plan.label_of(g) for g in ds.group_ids()]
    test = np.array([i for i, lab in enumerate(labels) if lab == "test"], dtype=np.int64)
    folds = [
        np.array([i for i, lab in enumerate(labels) if lab == f"fold{f}"], dtype=np.int64)
        for f in range(len(plan.folds))
    ]
    return test, folds


def write_split_plan(plan: SplitPlan, path) -> None:
    lines = [
        f"seed={plan.seed}",
        f"test_fraction={plan.test_fraction!r}",
        f"k={len(plan.folds)}",
        "bin_edges=" + ",".join(repr(float(e)) for e in plan.bin_edges),
    ]
    labelled = [(g, "test") for g in plan.test_group_ids]
    labelled += [(g, f"fold{f}") for f, fold in enumerate(plan.folds) for g in fold]
    lines += [f"{g}|{lab}" for g, lab in sorted(labelled)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_plan(path) -> SplitPlan:
    meta: dict[str, str] = {}
    test: set[str] = set()
    folds: dict[int, set[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "|" in line:
            g, lab = line.split("|")
            if lab == "test":
                test.add(g)
            else:
                folds.setdefault(int(lab.removeprefix("fold")), set()).add(g)
        elif "=" in line:
            key, value = line.split("=", 1)
            meta[key] = value
    k = int(meta["k"])
    edges = tuple(float(e) for e in meta["bin_edges"].split(","))
    return SplitPlan(
        frozenset(test),
        tuple(frozenset(folds.get(f, ())) for f in range(k)),
        int(meta["seed"]),
        edges,  # type: ignore[arg-type]
        float(meta["test_fraction"]),
    )


def fold_bin_counts(folds: Sequence[frozenset[str]], bins: Mapping[str, int], n_bins: int = 4) -> np.ndarray:
    out = np.zeros((len(folds), n_bins), dtype=np.int64)
    for f, fold in enumerate(folds):
        for g in fold:
            out[f, bins[g]] += 1
    return out
