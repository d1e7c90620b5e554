"""Cross-package acceptance: the exported CSV must work for its consumer.

These tests import the consumer package (openended-lab) on purpose; the
exporter's own implementation never does.
"""

import json
import os
import time

import numpy as np
import pytest

from deep_feature_exporter import ExporterConfig, export

consumer_io = pytest.importorskip("openended_lab.feature_io")
consumer_cli = pytest.importorskip("openended_lab.cli")


def _passed(name, t0, extra=""):
    tail = f" {extra}" if extra else ""
    print(f"[acceptance] {name}: PASS ({time.perf_counter() - t0:.2f}s){tail}")


@pytest.fixture(scope="module")
def exported_csv(image_tree, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("export") / "features.csv")
    rows, skips = export(image_tree, ExporterConfig(seed=1), out_path=out)
    assert skips == []
    return out, rows


def test_csv_loads_through_consumer_with_zero_schema_errors(exported_csv):
    t0 = time.perf_counter()
    path, rows = exported_csv
    dataset = consumer_io.load_features(path)
    assert len(dataset.views) == len(rows) == 12
    assert dataset.categories == ("bowl", "mug", "plate")
    for view in dataset.views:
        assert view.hand is None and view.deep is not None
        assert view.deep.shape == (576,)
        assert np.all(view.deep >= 0.0) and np.all(np.isfinite(view.deep))
        assert view.deep.sum() == pytest.approx(1.0, abs=1e-9)  # loader normalizes
    _passed("exported CSV loads through the consumer's feature loader", t0)


def test_single_image_pooling_idempotence(tmp_path):
    t0 = time.perf_counter()
    from conftest import solid_image

    solid_image(str(tmp_path / "mug" / "inst0" / "view000.png"), (77, 133, 210))
    avg, _ = export(str(tmp_path), ExporterConfig(pooling="AVG", seed=2))
    mx, _ = export(str(tmp_path), ExporterConfig(pooling="MAX", seed=2))
    assert np.array_equal(avg[0][3], mx[0][3])
    _passed("pooling is the identity on single-image views", t0)


def test_online_eval_consumes_export_end_to_end(exported_csv, tmp_path, capsys):
    t0 = time.perf_counter()
    path, _ = exported_csv
    out = str(tmp_path / "online")
    code = consumer_cli.main(
        ["online-eval", "--features", path, "--w", "1", "--metric-d", "dice",
         "--k", "1", "--intro-views", "2", "--seed", "5", "--out", out]
    )
    capsys.readouterr()
    assert code == 0
    summary = json.loads(open(os.path.join(out, "summary.json")).read())
    assert summary["termination"] in ("all_learned", "stalled", "pool_exhausted")
    assert os.path.exists(os.path.join(out, "curves.csv"))
    _passed(
        "online-eval consumes the exported file end to end",
        t0,
        f"termination={summary['termination']}",
    )


def test_distinct_categories_separate_under_dice(exported_csv, tmp_path, capsys):
    t0 = time.perf_counter()
    _, rows = exported_csv
    by_cat = {}
    for cat, inst, view, vec in rows:
        by_cat.setdefault(cat, []).append(vec)

    def dice(a, b):
        fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
        fa.write_text(",".join(repr(float(x)) for x in a) + "\n")
        fb.write_text(",".join(repr(float(x)) for x in b) + "\n")
        assert consumer_cli.main(
            ["dist", "--metric", "dice", "--a", str(fa), "--b", str(fb)]
        ) == 0
        return float(capsys.readouterr().out.strip().split(",")[1])

    within = dice(by_cat["mug"][0], by_cat["mug"][1])
    across = min(
        dice(by_cat["mug"][0], by_cat["bowl"][0]),
        dice(by_cat["mug"][0], by_cat["plate"][0]),
    )
    assert across > within
    _passed(
        "cross-category dice distance exceeds within-category",
        t0,
        f"within {within:.4f} < across {across:.4f}",
    )
