"""Open-ended evaluation: a simulated teacher driving a learning agent.

The teacher introduces categories one at a time (a few labeled views
each), then keeps asking the agent to classify unseen views of the
categories introduced so far, correcting every mistake by re-teaching the
true label. Once each known category has been probed at least once since
the last introduction (k >= n) and the sliding-window accuracy exceeds
tau, the next category is introduced. A run ends when all categories are
learned, when stall_budget asks pass without an introduction, or, with
view reuse disabled, when a category's views run out.

Reading of the sliding window: the window covers the most recent
min(k, window_factor * n) asks SINCE THE LAST INTRODUCTION; it never
spans across introductions. Asks target the known categories round-robin,
restarting from the first introduced category after each introduction,
which makes "k >= n" equivalent to "every known category asked since the
introduction" and keeps per-category ask counts within 1 of each other.

The run is a pure function of (dataset order, config, agent behavior):
one RNG seeded from the config draws the category order first, then every
pool shuffle, in a fixed order. Timing never enters the log.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientViews
from .memory import PerceptualMemory, classify, teach

TERMINATIONS = ("all_learned", "stalled", "pool_exhausted")


@dataclass(frozen=True)
class ProtocolConfig:
    tau: float = 0.8
    intro_views: int = 3
    window_factor: int = 3
    stall_budget: int = 100
    seed: int = 0
    allow_reuse: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.intro_views < 1:
            raise ValueError("intro_views must be >= 1")
        if self.window_factor < 1:
            raise ValueError("window_factor must be >= 1")
        if self.stall_budget < 1:
            raise ValueError("stall_budget must be >= 1")


@dataclass(frozen=True)
class LogRecord:
    iteration: int  # ask counter; teach records carry the current value
    action: str  # teach | ask | correct
    category: str
    predicted: str = ""
    correct: bool = None
    reused: bool = False


class _Pool:
    """Per-category view queue: shuffled once, reshuffled on exhaustion."""

    def __init__(self, views, rng):
        self._all = list(views)
        self._order = list(rng.permutation(len(self._all)))
        self._cursor = 0
        self._rng = rng

    def draw(self, allow_reuse):
        if self._cursor >= len(self._order):
            if not allow_reuse:
                return None, False
            self._order = list(self._rng.permutation(len(self._all)))
            self._cursor = 0
            reused = True
        else:
            reused = False
        view = self._all[self._order[self._cursor]]
        self._cursor += 1
        return view, reused


class ProtocolState:
    """Mutable run state; the loop is sequential by definition."""

    def __init__(self, dataset, config, agent):
        counts = dataset.per_category_counts()
        for label in sorted(counts):
            if counts[label] < config.intro_views:
                raise InsufficientViews(label, counts[label], config.intro_views)
        self.config = config
        self.agent = agent
        self.rng = np.random.default_rng(config.seed)
        cats = dataset.categories
        self.category_order = [cats[i] for i in self.rng.permutation(len(cats))]
        by_cat = {}
        for v in dataset.views:
            by_cat.setdefault(v.category, []).append(v)
        self.pools = {label: _Pool(by_cat[label], self.rng) for label in sorted(by_cat)}
        self.introduced = []
        self.k = 0  # asks since the last introduction
        self.recent = []  # ask outcomes (bool) since the last introduction
        self.iteration = 0  # total asks
        self.correct_asks = 0
        self.stored_instances = 0
        self.corrections = 0
        self.log = []
        self.curve = []  # (iteration, n, window_acc, global_acc, stored)
        self.per_category = {}  # label -> [asks, correct asks]

    @property
    def n(self):
        return len(self.introduced)

    @property
    def all_introduced(self):
        return len(self.introduced) == len(self.category_order)


def introduce_category(state):
    """Teach intro_views fresh views of the next category; reset the window."""
    label = state.category_order[state.n]
    state.introduced.append(label)
    for _ in range(state.config.intro_views):
        view, _ = state.pools[label].draw(allow_reuse=True)
        state.agent.teach(label, view)
        state.stored_instances += 1
        state.log.append(LogRecord(state.iteration, "teach", label))
    state.k = 0
    state.recent = []
    return state


def ask_step(state):
    """One Ask (and, on a miss, one Correct). Returns False on pool exhaustion."""
    target = state.introduced[state.k % state.n]
    view, reused = state.pools[target].draw(state.config.allow_reuse)
    if view is None:
        return False
    state.iteration += 1
    predicted = state.agent.ask(view)
    hit = predicted == target
    state.correct_asks += hit
    state.k += 1
    state.recent.append(hit)
    stats = state.per_category.setdefault(target, [0, 0])
    stats[0] += 1
    stats[1] += hit
    state.log.append(
        LogRecord(state.iteration, "ask", target, predicted=predicted, correct=hit, reused=reused)
    )
    if not hit:
        state.agent.teach(target, view)
        state.stored_instances += 1
        state.corrections += 1
        state.log.append(LogRecord(state.iteration, "correct", target))
    state.curve.append(
        (
            state.iteration,
            state.n,
            window_accuracy(state),
            state.correct_asks / state.iteration,
            state.stored_instances,
        )
    )
    return True


def window_accuracy(state):
    """Accuracy over the last min(k, window_factor * n) asks since the intro."""
    if state.k == 0:
        raise ValueError("window accuracy is undefined before the first ask")
    span = min(state.k, state.config.window_factor * state.n)
    tail = state.recent[-span:]
    return sum(tail) / len(tail)


@dataclass(frozen=True)
class ProtocolReport:
    categories_learned: int
    termination: str
    global_accuracy: float
    total_asks: int
    stored_instances: int
    corrections: int
    curve: tuple  # (iteration, n, window_accuracy, global_accuracy, stored)
    log: tuple
    per_n: tuple  # (n, questions, corrections) per known-category count
    per_category: dict  # label -> (asks, correct)
    seed: int


def run_protocol(dataset, config, agent):
    """Drive the full teacher loop and assemble the report."""
    state = ProtocolState(dataset, config, agent)
    introduce_category(state)
    termination = None
    while True:
        ok = ask_step(state)
        if not ok:
            termination = "pool_exhausted"
            break
        if state.k >= state.n and window_accuracy(state) > config.tau:
            if state.all_introduced:
                termination = "all_learned"
                break
            introduce_category(state)
        elif state.k >= config.stall_budget:
            termination = "stalled"
            break

    # Per-n questions/corrections table, recomputed from the log.
    per_n = {}
    n = 0
    i = 0
    log = state.log
    while i < len(log):
        rec = log[i]
        if rec.action == "teach":
            # intro_views consecutive teach records = one introduction
            n += 1
            i += config.intro_views
            continue
        row = per_n.setdefault(n, [0, 0])
        if rec.action == "ask":
            row[0] += 1
        else:
            row[1] += 1
        i += 1

    return ProtocolReport(
        categories_learned=state.n,
        termination=termination,
        global_accuracy=state.correct_asks / state.iteration if state.iteration else 0.0,
        total_asks=state.iteration,
        stored_instances=state.stored_instances,
        corrections=state.corrections,
        curve=tuple(state.curve),
        log=tuple(state.log),
        per_n=tuple((k, v[0], v[1]) for k, v in sorted(per_n.items())),
        per_category={k: tuple(v) for k, v in sorted(state.per_category.items())},
        seed=config.seed,
    )


class RecognizerAgent:
    """The real learner: perceptual memory + K-NN classification."""

    def __init__(self, recognizer_config):
        self.memory = PerceptualMemory(config=recognizer_config)

    def teach(self, label, view):
        self.memory = teach(self.memory, label, view)

    def ask(self, view):
        label, _, _ = classify(self.memory, view)
        return label


class AlwaysCorrectAgent:
    """Test stub that reads the ground-truth label off the view."""

    def teach(self, label, view):
        pass

    def ask(self, view):
        return view.category


class AlwaysWrongAgent:
    """Test stub that never answers with any real category name."""

    def teach(self, label, view):
        pass

    def ask(self, view):
        return "\x00never"


class CoinFlipAgent:
    """Test stub answering uniformly over the labels taught so far."""

    def __init__(self, seed=0):
        self.labels = []
        self.rng = np.random.default_rng(seed)

    def teach(self, label, view):
        if label not in self.labels:
            self.labels.append(label)

    def ask(self, view):
        return self.labels[self.rng.integers(0, len(self.labels))]


def run_repeats(dataset, config, recognizer_config, repeats):
    """Run the protocol `repeats` times with seeds seed+0..repeats-1.

    Returns (reports, rows, summary): one row per repeat with the global
    (micro) ask accuracy and the macro mean of per-category ask accuracy,
    plus Avg/Std aggregate rows.
    """
    reports = []
    rows = []
    for r in range(repeats):
        cfg = ProtocolConfig(
            tau=config.tau,
            intro_views=config.intro_views,
            window_factor=config.window_factor,
            stall_budget=config.stall_budget,
            seed=config.seed + r,
            allow_reuse=config.allow_reuse,
        )
        report = run_protocol(dataset, cfg, RecognizerAgent(recognizer_config))
        reports.append(report)
        per_cat = [c / a for a, c in report.per_category.values() if a > 0]
        rows.append(
            {
                "seed": cfg.seed,
                "categories_learned": report.categories_learned,
                "instance_accuracy": report.global_accuracy,
                "class_accuracy": sum(per_cat) / len(per_cat) if per_cat else 0.0,
                "total_asks": report.total_asks,
                "stored_instances": report.stored_instances,
                "termination": report.termination,
            }
        )
    inst = np.array([r["instance_accuracy"] for r in rows])
    cls = np.array([r["class_accuracy"] for r in rows])
    summary = {
        "avg_instance_accuracy": float(inst.mean()),
        "std_instance_accuracy": float(inst.std()),
        "avg_class_accuracy": float(cls.mean()),
        "std_class_accuracy": float(cls.std()),
        "avg_categories_learned": float(np.mean([r["categories_learned"] for r in rows])),
    }
    return reports, rows, summary
