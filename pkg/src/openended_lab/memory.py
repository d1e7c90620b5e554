"""Instance-based category memory and K-NN classification.

The memory stores raw taught views per label (duplicates allowed: a
correction legitimately re-stores a misclassified view) and classifies
queries by majority vote over the k nearest stored views under the
combined hand/deep distance. All tie-breaks are fully specified so runs
are reproducible: neighbor ties by (distance, label, insertion order),
vote ties by (smaller summed distance, then lexicographic label).

A memory behaves as a value. teach() returns a new memory sharing the
untouched label lists, so classification of many queries against one
snapshot is safe to run in parallel with further teaching.
"""

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyMemory, MissingRepresentation
from .metrics import canonical_metric, combined_distance, normalize_l1

ALLOWED_K = (1, 3, 5, 7, 9)

SNAPSHOT_SCHEMA = 1


@dataclass(frozen=True)
class FeatureView:
    """One object view: label metadata plus hand and/or deep feature vectors."""

    category: str = ""
    instance_id: str = ""
    view_id: str = ""
    hand: np.ndarray = None
    deep: np.ndarray = None

    def __post_init__(self):
        if self.hand is None and self.deep is None:
            raise MissingRepresentation("a view needs at least one of hand/deep features")
        for name in ("hand", "deep"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class RecognizerConfig:
    """Everything that pins down how a query is matched against memory."""

    descriptor: str = "good"
    bins: int = 30
    metric_h: str = "bhattacharyya"
    metric_d: str = "dice"
    w: float = 0.85
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "metric_h", canonical_metric(self.metric_h))
        object.__setattr__(self, "metric_d", canonical_metric(self.metric_d))
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must be in [0, 1], got {self.w}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.k not in ALLOWED_K:
            warnings.warn(
                f"k={self.k} is outside the usual grid {ALLOWED_K}; proceeding anyway",
                stacklevel=2,
            )

    def required_representations(self):
        reps = []
        if self.w < 1.0:
            reps.append("hand")
        if self.w > 0.0:
            reps.append("deep")
        return tuple(reps)


def _check_reps(config, view, role):
    for rep in config.required_representations():
        if getattr(view, rep) is None:
            raise MissingRepresentation(
                f"{role} view {view.instance_id!r}/{view.view_id!r} lacks the {rep!r} "
                f"representation required by w={config.w}"
            )


@dataclass(frozen=True)
class PerceptualMemory:
    """Label -> taught views, with a monotone sequence number per view."""

    config: RecognizerConfig = field(default_factory=RecognizerConfig)
    instances: dict = field(default_factory=dict)  # label -> tuple of (seq, FeatureView)
    next_seq: int = 0

    @property
    def categories(self):
        return tuple(sorted(self.instances))

    @property
    def category_count(self):
        return len(self.instances)

    @property
    def stored_count(self):
        return sum(len(v) for v in self.instances.values())

    def views_of(self, label):
        return tuple(v for _, v in self.instances.get(label, ()))


def teach(mem, label, view):
    """Append one view under label, returning the updated memory value."""
    if not label:
        raise ValueError("label must be a nonempty string")
    _check_reps(mem.config, view, "taught")
    entries = dict(mem.instances)
    entries[label] = entries.get(label, ()) + ((mem.next_seq, view),)
    return replace(mem, instances=entries, next_seq=mem.next_seq + 1)


def _distances(mem, query):
    _check_reps(mem.config, query, "query")
    cfg = mem.config
    out = []
    for label in mem.instances:
        for seq, stored in mem.instances[label]:
            d = combined_distance(query, stored, cfg.w, cfg.metric_h, cfg.metric_d)
            out.append((d, label, seq))
    return out


def nearest(mem, query, k=None):
    """The min(k, stored) nearest stored views as (label, distance) pairs.

    Ascending by distance; exact distance ties fall back to lexicographic
    label, then insertion order, so the result is reproducible.
    """
    if mem.stored_count == 0:
        raise EmptyMemory("no taught views to match against")
    k = mem.config.k if k is None else k
    scored = _distances(mem, query)
    scored.sort(key=lambda t: (t[0], t[1], t[2]))
    return [(label, d) for d, label, _ in scored[: min(k, len(scored))]]


def classify(mem, query, k=None):
    """Majority vote over the k nearest views.

    Returns (label, vote_counts, min_distance_per_label). Vote ties go to
    the tied label with the smaller summed neighbor distance, then to the
    lexicographically smaller label.
    """
    neigh = nearest(mem, query, k)
    votes = {}
    sums = {}
    mins = {}
    for label, d in neigh:
        votes[label] = votes.get(label, 0) + 1
        sums[label] = sums.get(label, 0.0) + d
        mins[label] = min(mins.get(label, d), d)
    top = max(votes.values())
    tied = [lab for lab, c in votes.items() if c == top]
    winner = min(tied, key=lambda lab: (sums[lab], lab))
    return winner, votes, mins


def snapshot(mem):
    """Serialize the memory to a JSON document (schema 1)."""
    doc = {
        "schema": SNAPSHOT_SCHEMA,
        "config": {
            "descriptor": mem.config.descriptor,
            "bins": mem.config.bins,
            "metric_h": mem.config.metric_h,
            "metric_d": mem.config.metric_d,
            "w": mem.config.w,
            "k": mem.config.k,
        },
        "next_seq": mem.next_seq,
        "instances": {
            label: [
                {
                    "seq": seq,
                    "category": v.category,
                    "instance_id": v.instance_id,
                    "view_id": v.view_id,
                    "hand": None if v.hand is None else v.hand.tolist(),
                    "deep": None if v.deep is None else v.deep.tolist(),
                }
                for seq, v in mem.instances[label]
            ]
            for label in sorted(mem.instances)
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def restore(text):
    """Rebuild a PerceptualMemory from a schema-1 snapshot document."""
    doc = json.loads(text)
    if doc.get("schema") != SNAPSHOT_SCHEMA:
        raise ValueError(f"unsupported snapshot schema {doc.get('schema')!r}")
    c = doc["config"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        config = RecognizerConfig(
            descriptor=c["descriptor"],
            bins=c["bins"],
            metric_h=c["metric_h"],
            metric_d=c["metric_d"],
            w=c["w"],
            k=c["k"],
        )
    instances = {}
    for label, rows in doc["instances"].items():
        entries = []
        for r in rows:
            view = FeatureView(
                category=r["category"],
                instance_id=r["instance_id"],
                view_id=r["view_id"],
                hand=None if r["hand"] is None else np.array(r["hand"], dtype=np.float64),
                deep=None if r["deep"] is None else np.array(r["deep"], dtype=np.float64),
            )
            entries.append((r["seq"], view))
        instances[label] = tuple(entries)
    return PerceptualMemory(config=config, instances=instances, next_seq=doc["next_seq"])


def normalized_deep(vector):
    """L1-normalize a raw deep feature vector for storage/matching."""
    return normalize_l1(np.asarray(vector, dtype=np.float64))
