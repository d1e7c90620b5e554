"""Offline evaluation: stratified K-fold cross-validation and grid search.

Folding is stratified per category (each category's views are shuffled by
a seeded RNG, then dealt round-robin to folds) so every fold contains
examples from all categories and per-category fold sizes differ by at
most one. Fold assignment depends only on (dataset, K, seed), never on
the recognizer config, so grid points are compared on identical splits.

Two accuracies are always reported: instance accuracy (micro, trace over
total) and class accuracy (macro, the arithmetic mean of per-category
recalls). Timing means are wall-clock and hardware-dependent; they are
carried in reports for ranking but kept out of any determinism contract.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyDataset, InsufficientViews, LabError
from .memory import PerceptualMemory, classify, teach


@dataclass(frozen=True)
class Dataset:
    """Labeled feature views plus a display name."""

    views: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))

    @property
    def categories(self):
        return tuple(sorted({v.category for v in self.views}))

    def per_category_counts(self):
        counts = {}
        for v in self.views:
            counts[v.category] = counts.get(v.category, 0) + 1
        return counts


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray  # view index -> fold id
    k_folds: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "fold_of", np.asarray(self.fold_of, dtype=np.int64))

    def test_indices(self, fold):
        return np.nonzero(self.fold_of == fold)[0]


@dataclass(frozen=True)
class EvalReport:
    config: object
    seed: int
    categories: tuple
    confusion: np.ndarray  # true x predicted counts
    instance_accuracy: float
    class_accuracy: float
    mean_describe_time: float = 0.0
    mean_classify_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "confusion", np.asarray(self.confusion, dtype=np.int64))


def _validated(ds, k_folds):
    if not ds.views:
        raise EmptyDataset(f"dataset {ds.name!r} has no views")
    cats = ds.categories
    if len(cats) < 2:
        raise EmptyDataset(f"dataset {ds.name!r} has {len(cats)} category; need at least 2")
    for label, count in sorted(ds.per_category_counts().items()):
        if count < k_folds:
            raise InsufficientViews(label, count, k_folds)
    return cats


def stratified_folds(ds, k_folds=10, seed=0):
    """Assign every view to a fold, stratified per category.

    Deterministic in (dataset order, k_folds, seed). Categories are
    processed in sorted order so the RNG consumption is reproducible.
    """
    _validated(ds, k_folds)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(ds.views), dtype=np.int64)
    by_cat = {}
    for i, v in enumerate(ds.views):
        by_cat.setdefault(v.category, []).append(i)
    for label in sorted(by_cat):
        idx = by_cat[label]
        perm = rng.permutation(len(idx))
        for deal, p in enumerate(perm):
            fold_of[idx[p]] = deal % k_folds
    return FoldAssignment(fold_of=fold_of, k_folds=k_folds, seed=seed)


def cross_validate(ds, cfg, k_folds=10, seed=0, assignment=None, describe_time=0.0):
    """K-fold evaluation of one recognizer config.

    For each fold, a memory is taught from all other folds and the fold's
    views are classified; the confusion matrix aggregates all K test
    phases, so every view is tested exactly once.
    """
    cats = _validated(ds, k_folds)
    if assignment is None:
        assignment = stratified_folds(ds, k_folds, seed)
    cat_index = {c: i for i, c in enumerate(cats)}
    confusion = np.zeros((len(cats), len(cats)), dtype=np.int64)
    classify_time = 0.0
    classified = 0
    for fold in range(assignment.k_folds):
        mem = PerceptualMemory(config=cfg)
        test_mask = assignment.fold_of == fold
        for i, view in enumerate(ds.views):
            if not test_mask[i]:
                mem = teach(mem, view.category, view)
        for i in np.nonzero(test_mask)[0]:
            view = ds.views[i]
            t0 = time.perf_counter()
            predicted, _, _ = classify(mem, view)
            classify_time += time.perf_counter() - t0
            classified += 1
            confusion[cat_index[view.category], cat_index[predicted]] += 1

    total = int(confusion.sum())
    instance_acc = float(np.trace(confusion)) / total
    row_sums = confusion.sum(axis=1)
    recalls = np.diag(confusion) / row_sums
    return EvalReport(
        config=cfg,
        seed=seed,
        categories=cats,
        confusion=confusion,
        instance_accuracy=instance_acc,
        class_accuracy=float(recalls.mean()),
        mean_describe_time=describe_time,
        mean_classify_time=classify_time / classified if classified else 0.0,
    )


@dataclass(frozen=True)
class GridResult:
    reports: tuple  # EvalReports ranked best-first
    failures: tuple  # (grid_index, config, error message)


def grid_search(ds, grid, k_folds=10, seed=0):
    """Evaluate every config on one shared fold assignment and rank.

    Ranking: class accuracy descending, then instance accuracy descending,
    then mean classify time ascending. A config that raises is recorded as
    a failed cell; the sweep continues.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("config grid is empty")
    assignment = stratified_folds(ds, k_folds, seed)
    scored = []
    failures = []
    for gi, cfg in enumerate(grid):
        try:
            report = cross_validate(ds, cfg, k_folds, seed, assignment=assignment)
        except LabError as exc:
            failures.append((gi, cfg, f"{type(exc).__name__}: {exc}"))
            continue
        scored.append((gi, report))
    scored.sort(
        key=lambda t: (
            -t[1].class_accuracy,
            -t[1].instance_accuracy,
            t[1].mean_classify_time,
            t[0],
        )
    )
    return GridResult(reports=tuple(r for _, r in scored), failures=tuple(failures))


def report_to_dict(report, include_timing=True):
    """JSON-ready dict for one EvalReport.

    Timing is wall-clock noise; callers producing hash-stable artifacts
    pass include_timing=False and write timing to a sidecar instead.
    """
    doc = {
        "config": {
            "descriptor": report.config.descriptor,
            "bins": report.config.bins,
            "metric_h": report.config.metric_h,
            "metric_d": report.config.metric_d,
            "w": report.config.w,
            "k": report.config.k,
        },
        "seed": report.seed,
        "categories": list(report.categories),
        "confusion": report.confusion.tolist(),
        "instance_accuracy": report.instance_accuracy,
        "class_accuracy": report.class_accuracy,
    }
    if include_timing:
        doc["mean_describe_time"] = report.mean_describe_time
        doc["mean_classify_time"] = report.mean_classify_time
    return doc


def confusion_csv(report):
    """Confusion matrix as CSV text; header row/column are category names."""
    lines = ["true\\predicted," + ",".join(report.categories)]
    for i, cat in enumerate(report.categories):
        lines.append(cat + "," + ",".join(str(int(c)) for c in report.confusion[i]))
    return "\n".join(lines) + "\n"
