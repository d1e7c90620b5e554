"""Acceptance suite: one end-to-end check per headline requirement.

Each test exercises one guarantee at its stated tolerance and runtime
budget and prints a single pass line (visible with `pytest -v -s`).
A failed assertion is the corresponding fail line.
"""

import json
import os
import time

import numpy as np
import pytest

from conftest import make_feature_dataset, random_histogram
from oracles import oracle_classify, oracle_distance, oracle_nearest, replay_protocol_log

from openended_lab.cli import main
from openended_lab.descriptor import GoodParams, good_descriptor
from openended_lab.memory import (
    FeatureView,
    PerceptualMemory,
    RecognizerConfig,
    classify,
    nearest,
    teach,
)
from openended_lab.metrics import METRIC_NAMES, combined_distance, distance
from openended_lab.offline_eval import Dataset, cross_validate, stratified_folds
from openended_lab.pointcloud import (
    DEMO_CATEGORIES,
    ShapeSpec,
    random_rotation,
    synthesize,
    transform,
    write_dataset_tree,
)
from openended_lab.feature_io import extract_dataset
from openended_lab.teacher_sim import (
    AlwaysCorrectAgent,
    AlwaysWrongAgent,
    CoinFlipAgent,
    ProtocolConfig,
    RecognizerAgent,
    run_protocol,
    run_repeats,
)

ASYMMETRIC = {"pearson", "neyman", "kl_divergence"}

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def _passed(name, t0, extra=""):
    dt = time.perf_counter() - t0
    tail = f" {extra}" if extra else ""
    print(f"[acceptance] {name}: PASS ({dt:.2f}s){tail}")
    return dt


@pytest.fixture(scope="module")
def demo_tree(tmp_path_factory):
    """10 categories x 20 views of rigidly posed synthetic clouds."""
    root = tmp_path_factory.mktemp("demo_tree")
    write_dataset_tree(
        root,
        DEMO_CATEGORIES,
        views_per_category=20,
        point_count=1200,
        noise_sigma=0.01,
        seed=42,
    )
    return str(root)


@pytest.fixture(scope="module")
def demo_features(demo_tree, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("demo_feat") / "features.csv")
    dataset, skips, _ = extract_dataset(demo_tree, GoodParams(bins=30), out_path=out)
    assert skips == []
    return out, dataset


def test_01_distance_metric_suite(rng):
    t0 = time.perf_counter()
    for metric in METRIC_NAMES:
        ident = 0.5 if metric == "motyka" else 0.0
        for dim in (2, 5, 16):
            p = random_histogram(rng, dim)
            assert distance(metric, p, p) == pytest.approx(ident, abs=1e-9)
        for case in range(10):
            p = random_histogram(rng, 8, positive=case < 6)
            q = random_histogram(rng, 8, positive=case < 6)
            got = distance(metric, p, q)
            assert got >= 0.0 and np.isfinite(got)
            assert got == pytest.approx(
                oracle_distance(metric, list(p), list(q)), rel=1e-9, abs=1e-9
            )
            flipped = distance(metric, q, p)
            if metric not in ASYMMETRIC:
                assert flipped == pytest.approx(got, rel=1e-12, abs=1e-12)
    p = np.array([0.5, 0.5])
    q = np.array([0.9, 0.1])
    assert distance("pearson", p, q) == pytest.approx(distance("neyman", q, p), rel=1e-12)
    assert abs(distance("kl_divergence", p, q) - distance("kl_divergence", q, p)) > 1e-3
    assert abs(distance("pearson", p, q) - distance("pearson", q, p)) > 1e-3
    dt = _passed("distance metric suite vs scalar oracle", t0)
    assert dt < 1.0


def test_02_knn_matches_bruteforce_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2002)
    dim_h, dim_d = 6, 5
    agree = 0
    for case in range(500):
        mode = case % 3  # hand only / deep only / combined
        w = (0.0, 1.0, float(rng.uniform(0.05, 0.95)))[mode]
        metric_h = str(rng.choice(METRIC_NAMES))
        metric_d = str(rng.choice(METRIC_NAMES))
        k = int(rng.choice([1, 3, 5, 7, 9]))
        cfg = RecognizerConfig(metric_h=metric_h, metric_d=metric_d, w=w, k=k)
        mem = PerceptualMemory(config=cfg)
        stored = []
        made = []
        n_labels = int(rng.integers(2, 7))
        for li in range(n_labels):
            label = f"lab{li:02d}"
            for _ in range(int(rng.integers(1, 6))):
                # every fifth view reuses an earlier vector to force exact ties
                if made and rng.random() < 0.2:
                    hand, deep = made[int(rng.integers(len(made)))]
                else:
                    hand = random_histogram(rng, dim_h)
                    deep = random_histogram(rng, dim_d)
                    made.append((hand, deep))
                view = FeatureView(label, "i0", f"v{len(stored):03d}", hand=hand, deep=deep)
                stored.append((label, len(stored), list(hand), list(deep)))
                mem = teach(mem, label, view)
        qh, qd = random_histogram(rng, dim_h), random_histogram(rng, dim_d)
        query = FeatureView("?", "i0", "q", hand=qh, deep=qd)
        got = nearest(mem, query)
        want = oracle_nearest(stored, (list(qh), list(qd)), k, w, metric_h, metric_d)
        assert [lab for lab, _ in got] == [lab for lab, _ in want]
        for (_, gd), (_, wd) in zip(got, want):
            assert gd == pytest.approx(wd, rel=1e-9, abs=1e-12)
        winner, _, _ = classify(mem, query)
        assert winner == oracle_classify(stored, (list(qh), list(qd)), k, w, metric_h, metric_d)
        agree += 1
    assert agree == 500
    dt = _passed("K-NN classify vs brute-force oracle (500 cases)", t0)
    assert dt < 10.0


def test_03_descriptor_invariances():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3003)
    params = GoodParams(bins=30)
    worst_rot = 0.0
    for i in range(50):
        kind = ("box", "ellipsoid")[i % 2]
        extents = (
            4.0 + rng.uniform(-0.5, 0.5),
            2.0 + rng.uniform(-0.3, 0.3),
            1.0 + rng.uniform(-0.15, 0.15),
        )
        cloud = synthesize(ShapeSpec(kind, extents, 800, 0.005, 3000 + i))
        base = good_descriptor(cloud, params)
        assert base.shape == (3 * 30 * 30,)
        assert base.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(base >= 0.0)

        shifted = good_descriptor(
            transform(cloud, np.eye(3), rng.uniform(-5.0, 5.0, 3)), params
        )
        assert np.max(np.abs(shifted - base)) <= 1e-12

        for s in (0.1, 1.0, 10.0):
            scaled = good_descriptor(transform(cloud, np.eye(3), (0, 0, 0), s), params)
            assert np.max(np.abs(scaled - base)) <= 1e-9

        rotated = good_descriptor(transform(cloud, random_rotation(rng), (0, 0, 0)), params)
        drift = float(np.abs(rotated - base).sum())
        worst_rot = max(worst_rot, drift)
        assert drift <= 0.05
    assert good_descriptor(cloud, GoodParams(bins=10)).shape == (300,)
    dt = _passed("descriptor invariances (50 clouds)", t0, f"worst rotation L1 {worst_rot:.4f}")
    assert dt < 30.0


def test_04_combined_distance_reductions():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4004)
    for _ in range(100):
        metric_h = str(rng.choice(METRIC_NAMES))
        metric_d = str(rng.choice(METRIC_NAMES))
        a = FeatureView("a", "i", "v", hand=random_histogram(rng, 12),
                        deep=random_histogram(rng, 7))
        b = FeatureView("b", "i", "v", hand=random_histogram(rng, 12),
                        deep=random_histogram(rng, 7))
        dh = distance(metric_h, a.hand, b.hand)
        dd = distance(metric_d, a.deep, b.deep)
        assert combined_distance(a, b, 0.0, metric_h, metric_d) == dh
        assert combined_distance(a, b, 1.0, metric_h, metric_d) == dd
        for w in (0.25, 0.5, 0.85):
            got = combined_distance(a, b, w, metric_h, metric_d)
            assert abs(got - ((1.0 - w) * dh + w * dd)) <= 1e-12
    _passed("combined-distance endpoint and affine identities (100 pairs)", t0)


def test_05_cross_validation_bookkeeping(demo_features):
    t0 = time.perf_counter()
    _, dataset = demo_features
    assert len(dataset.categories) == 10
    assert all(c == 20 for c in dataset.per_category_counts().values())

    assignment = stratified_folds(dataset, 10, seed=0)
    fold_sizes = np.bincount(assignment.fold_of, minlength=10)
    assert list(fold_sizes) == [20] * 10
    for cat in dataset.categories:
        idx = [i for i, v in enumerate(dataset.views) if v.category == cat]
        per_fold = np.bincount(assignment.fold_of[idx], minlength=10)
        assert list(per_fold) == [2] * 10

    cfg = RecognizerConfig(bins=30, metric_h="bhattacharyya", w=0.0, k=1)
    report = cross_validate(dataset, cfg, k_folds=10, seed=0, assignment=assignment)
    conf = report.confusion
    assert conf.sum() == len(dataset.views)  # every view tested exactly once
    assert abs(np.trace(conf) / conf.sum() - report.instance_accuracy) <= 1e-12
    recalls = np.diag(conf) / conf.sum(axis=1)
    assert abs(recalls.mean() - report.class_accuracy) <= 1e-12
    assert report.instance_accuracy == 1.0
    dt = _passed("cross-validation bookkeeping + separable accuracy 1.0", t0)
    assert dt < 120.0


def test_06_protocol_mechanics():
    t0 = time.perf_counter()
    ds12 = make_feature_dataset(n_categories=12, views_per=8, dim=24, seed=5)
    cfg = ProtocolConfig(seed=3)
    rep = run_protocol(ds12, cfg, AlwaysCorrectAgent())
    assert rep.termination == "all_learned"
    assert rep.total_asks == sum(range(1, 13)) == 78
    assert rep.corrections == 0
    assert rep.categories_learned == 12

    ds3 = make_feature_dataset(n_categories=3, views_per=6, dim=12, seed=6)
    stall_cfg = ProtocolConfig(stall_budget=100, seed=7)
    stalled = run_protocol(ds3, stall_cfg, AlwaysWrongAgent())
    assert stalled.termination == "stalled"
    assert stalled.total_asks == 100
    assert stalled.stored_instances == 3 + 100

    ds4 = make_feature_dataset(n_categories=4, views_per=16, dim=16, seed=8)
    runs = [
        (cfg, rep),
        (stall_cfg, stalled),
        (ProtocolConfig(seed=11), run_protocol(ds4, ProtocolConfig(seed=11), CoinFlipAgent(1))),
        (
            ProtocolConfig(seed=13),
            run_protocol(
                ds4,
                ProtocolConfig(seed=13),
                RecognizerAgent(RecognizerConfig(metric_h="bhattacharyya", w=0.0, k=1)),
            ),
        ),
    ]
    for used_cfg, report in runs:
        # replays the log and asserts the gate: no introduction while window <= tau
        replay_protocol_log(
            report.log, used_cfg.tau, used_cfg.intro_views, used_cfg.window_factor
        )

    def log_bytes(report):
        return "\n".join(
            f"{r.iteration},{r.action},{r.category},{r.predicted},{r.correct},{r.reused}"
            for r in report.log
        ).encode()

    again = run_protocol(ds4, ProtocolConfig(seed=11), CoinFlipAgent(1))
    assert log_bytes(again) == log_bytes(runs[2][1])
    other_seed = run_protocol(ds4, ProtocolConfig(seed=12), CoinFlipAgent(1))
    assert log_bytes(other_seed) != log_bytes(runs[2][1])
    dt = _passed("teaching protocol mechanics + byte-identical logs", t0)
    assert dt < 10.0


def test_07_threshold_sweep_cli(demo_features, tmp_path, capsys):
    t0 = time.perf_counter()
    csv_path, _ = demo_features
    stored_curves = {}
    for tau in ("0.7", "0.8", "0.9"):
        out = str(tmp_path / f"tau{tau}")
        code = main(
            ["online-eval", "--features", csv_path, "--w", "0", "--k", "1",
             "--metric-h", "bhattacharyya", "--tau", tau, "--seed", "9", "--out", out]
        )
        assert code == 0
        lines = open(os.path.join(out, "curves.csv")).read().splitlines()
        assert lines[0] == "iteration,n,window_accuracy,global_accuracy,stored_instances"
        stored = [int(row.split(",")[4]) for row in lines[1:]]
        assert stored == sorted(stored) and len(stored) >= 1
        stored_curves[tau] = stored
        summary = json.loads(open(os.path.join(out, "summary.json")).read())
        assert summary["protocol"]["tau"] == float(tau)
    assert len(stored_curves) == 3

    rep_out = str(tmp_path / "repeats")
    code = main(
        ["online-eval", "--features", csv_path, "--w", "0", "--k", "1",
         "--metric-h", "bhattacharyya", "--tau", "0.8", "--seed", "9",
         "--repeats", "10", "--out", rep_out]
    )
    assert code == 0
    capsys.readouterr()
    summary = json.loads(open(os.path.join(rep_out, "summary.json")).read())
    assert len(summary["repeats"]) == 10
    agg = summary["summary"]
    for key in ("avg_instance_accuracy", "std_instance_accuracy",
                "avg_class_accuracy", "std_class_accuracy"):
        assert key in agg and np.isfinite(agg[key])
    inst = [row["instance_accuracy"] for row in summary["repeats"]]
    assert agg["avg_instance_accuracy"] == pytest.approx(np.mean(inst), abs=1e-12)
    assert agg["std_instance_accuracy"] == pytest.approx(np.std(inst), abs=1e-12)
    dt = _passed("threshold sweep + repeated-run Avg/Std via CLI", t0)
    assert dt < 120.0


def _radial_hist(points, bins=8):
    """Crude second representation: distance-from-centroid histogram."""
    centered = points - points.mean(axis=0)
    r = np.linalg.norm(centered, axis=1)
    r = r / r.max()
    idx = np.clip(np.floor(r * bins).astype(int), 0, bins - 1)
    h = np.bincount(idx, minlength=bins).astype(float)
    return h / h.sum()


def _two_channel_dataset():
    """5 near-confusable categories x 60 posed views, two representations.

    Deliberately hard (few points, heavy noise) so neither representation
    is saturated and the combination has room to help.
    """
    shapes = {
        "boxa": ("box", (4.0, 2.0, 1.0)),
        "boxb": ("box", (4.5, 2.05, 1.02)),
        "cyl": ("cylinder", (3.0, 2.0, 5.0)),
        "ella": ("ellipsoid", (4.0, 2.0, 1.0)),
        "ellb": ("ellipsoid", (4.5, 2.05, 1.02)),
    }
    rng = np.random.default_rng(11)
    params = GoodParams(bins=30)
    views = []
    for cat, (kind, extents) in shapes.items():
        for v in range(60):
            seed = int(rng.integers(0, 2**62))
            cloud = synthesize(ShapeSpec(kind, extents, 300, 0.25, seed))
            cloud = transform(
                cloud,
                random_rotation(rng),
                rng.uniform(-1.0, 1.0, 3),
                float(rng.uniform(0.5, 2.0)),
            )
            views.append(
                FeatureView(
                    cat,
                    f"inst{v % 2}",
                    f"view{v:03d}",
                    hand=good_descriptor(cloud, params),
                    deep=_radial_hist(cloud.points),
                )
            )
    return Dataset(views=tuple(views), name="two-channel-hard")


def test_08_combined_beats_single_representation_ablations():
    t0 = time.perf_counter()
    dataset = _two_channel_dataset()
    assert len(dataset.views) == 300 and len(dataset.categories) == 5
    assignment = stratified_folds(dataset, 10, seed=0)
    acc = {}
    for label, w in (("hand", 0.0), ("deep", 1.0), ("combined", 0.85)):
        cfg = RecognizerConfig(metric_h="bhattacharyya", metric_d="dice", w=w, k=1)
        report = cross_validate(dataset, cfg, k_folds=10, seed=0, assignment=assignment)
        acc[label] = report.instance_accuracy
    assert acc["combined"] >= max(acc["hand"], acc["deep"])
    _passed(
        "combined recognizer >= both single-representation ablations",
        t0,
        "instance acc: hand %.4f deep %.4f combined %.4f"
        % (acc["hand"], acc["deep"], acc["combined"]),
    )
