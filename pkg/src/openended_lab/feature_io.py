"""Feature-file ingestion and emission, plus experiment config loading.

One universal CSV schema carries both representations so any exporter can
feed the evaluators without code changes:

    category,instance_id,view_id,tag,dim,v1..vN

`tag` is `hand` or `deep`; `dim` is that row's own vector length (rows are
ragged, N in the header is the file-wide maximum); values use `.` decimals
and repr formatting so floats round-trip exactly; files are UTF-8 with LF
line endings; rows are sorted lexicographically by (category, instance_id,
view_id, tag) so rewrites are byte-identical.

Hand vectors are taken as stored. Deep vectors are L1-normalized at load
(negatives clamped) to satisfy the histogram precondition of the distance
functions.
"""

import json
import os
import time

import numpy as np

from .descriptor import GoodParams, good_descriptor
from .errors import ConfigError, EmptyDataset, LabError, SchemaError
from .memory import FeatureView, RecognizerConfig, normalized_deep
from .offline_eval import Dataset
from .pointcloud import load_cloud
from .teacher_sim import ProtocolConfig

TAGS = ("hand", "deep")

CONFIG_SCHEMA = 1

_FIXED_COLUMNS = ("category", "instance_id", "view_id", "tag", "dim")


def write_features(views, path):
    """Write views to a feature CSV; deterministic for identical input."""
    rows = []
    for v in views:
        for tag in TAGS:
            vec = getattr(v, tag)
            if vec is None:
                continue
            rows.append((v.category, v.instance_id, v.view_id, tag, vec))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    max_dim = max((len(r[4]) for r in rows), default=0)
    header = ",".join(_FIXED_COLUMNS + tuple(f"v{i + 1}" for i in range(max_dim)))
    lines = [header]
    for cat, inst, view, tag, vec in rows:
        cells = [cat, inst, view, tag, str(len(vec))]
        cells.extend(repr(float(x)) for x in vec)
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def load_features(path, name=None):
    """Read a feature CSV into a Dataset of FeatureViews.

    Enforces a constant vector dimension per tag; a drift raises
    SchemaError naming the offending row. Rows sharing one
    (category, instance_id, view_id) key merge into a single view
    carrying both representations.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError(0, "empty file; header row is mandatory")
    header = lines[0].split(",")
    if tuple(header[:5]) != _FIXED_COLUMNS:
        raise SchemaError(1, f"header must start with {','.join(_FIXED_COLUMNS)}")

    dim_of_tag = {}
    merged = {}  # (category, instance, view) -> {tag: vector}
    order = []
    for row_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) < 6:
            raise SchemaError(row_no, "row has no vector values")
        cat, inst, view, tag = cells[0], cells[1], cells[2], cells[3]
        if tag not in TAGS:
            raise SchemaError(row_no, f"tag must be one of {TAGS}, got {tag!r}")
        try:
            dim = int(cells[4])
        except ValueError:
            raise SchemaError(row_no, f"dim is not an integer: {cells[4]!r}") from None
        if dim < 1:
            raise SchemaError(row_no, f"dim must be positive, got {dim}")
        if len(cells) != 5 + dim:
            raise SchemaError(row_no, f"dim = {dim} but row carries {len(cells) - 5} values")
        if tag in dim_of_tag and dim_of_tag[tag] != dim:
            raise SchemaError(
                row_no, f"dimension drift for tag {tag!r}: {dim} after {dim_of_tag[tag]}"
            )
        dim_of_tag[tag] = dim
        try:
            vec = np.array([float(c) for c in cells[5:]], dtype=np.float64)
        except ValueError:
            raise SchemaError(row_no, "non-numeric vector value") from None
        if not np.all(np.isfinite(vec)):
            raise SchemaError(row_no, "vector values must be finite")
        key = (cat, inst, view)
        if key not in merged:
            merged[key] = {}
            order.append(key)
        if tag in merged[key]:
            raise SchemaError(row_no, f"duplicate {tag!r} row for {key}")
        merged[key][tag] = vec

    views = []
    for key in order:
        cat, inst, view = key
        reps = merged[key]
        views.append(
            FeatureView(
                category=cat,
                instance_id=inst,
                view_id=view,
                hand=reps.get("hand"),
                deep=None if "deep" not in reps else normalized_deep(reps["deep"]),
            )
        )
    return Dataset(views=tuple(views), name=name or os.path.basename(str(path)))


def scan_cloud_tree(root):
    """List (category, instance_id, view_id, path) for every cloud file."""
    found = []
    root = str(root)
    if not os.path.isdir(root):
        raise EmptyDataset(f"dataset root {root!r} is not a directory")
    for cat in sorted(os.listdir(root)):
        cat_dir = os.path.join(root, cat)
        if not os.path.isdir(cat_dir):
            continue
        for inst in sorted(os.listdir(cat_dir)):
            inst_dir = os.path.join(cat_dir, inst)
            if not os.path.isdir(inst_dir):
                continue
            for fname in sorted(os.listdir(inst_dir)):
                if fname.lower().endswith((".pcd", ".ply")):
                    view_id = os.path.splitext(fname)[0]
                    found.append((cat, inst, view_id, os.path.join(inst_dir, fname)))
    return found


def extract_dataset(root, params=GoodParams(), out_path=None, name=None):
    """Describe every cloud under root and optionally write the feature CSV.

    Returns (dataset, skips, mean_describe_time). Views whose clouds fail
    to parse or are too degenerate to describe are skipped and reported,
    not fatal; reruns on unchanged inputs produce byte-identical files.
    """
    entries = scan_cloud_tree(root)
    if not entries:
        raise EmptyDataset(f"no .pcd/.ply files under {root!r}")
    views = []
    skips = []
    describe_time = 0.0
    for cat, inst, view_id, path in entries:
        try:
            cloud = load_cloud(path)
            t0 = time.perf_counter()
            hist = good_descriptor(cloud, params)
            describe_time += time.perf_counter() - t0
        except LabError as exc:
            skips.append({"path": path, "error": f"{type(exc).__name__}: {exc}"})
            continue
        views.append(FeatureView(category=cat, instance_id=inst, view_id=view_id, hand=hist))
    if not views:
        raise EmptyDataset(f"every cloud under {root!r} was skipped: {skips}")
    ds = Dataset(views=tuple(views), name=name or os.path.basename(str(root)))
    if out_path is not None:
        write_features(ds.views, out_path)
        sidecar = str(out_path) + ".skipped.json"
        with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"skipped": skips}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return ds, skips, describe_time / len(views)


def recognizer_config_from_dict(doc):
    try:
        return RecognizerConfig(
            descriptor=doc.get("descriptor", "good"),
            bins=int(doc.get("bins", 30)),
            metric_h=doc.get("metric_h", "bhattacharyya"),
            metric_d=doc.get("metric_d", "dice"),
            w=float(doc.get("w", 0.85)),
            k=int(doc.get("k", 1)),
        )
    except (ValueError, LabError) as exc:
        raise ConfigError(f"bad recognizer config: {exc}") from None


def protocol_config_from_dict(doc, seed=0):
    try:
        return ProtocolConfig(
            tau=float(doc.get("tau", 0.8)),
            intro_views=int(doc.get("intro_views", 3)),
            window_factor=int(doc.get("window_factor", 3)),
            stall_budget=int(doc.get("stall_budget", 100)),
            seed=int(doc.get("seed", seed)),
            allow_reuse=bool(doc.get("allow_reuse", True)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad protocol config: {exc}") from None


def load_experiment_config(path):
    """Load a JSON experiment config; CLI flags override its values."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    if doc.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}")
    for key in ("dataset", "features"):
        p = doc.get(key)
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"config {key} path does not exist: {p!r}")
    return doc


def expand_grid(doc):
    """Cartesian product of a JSON grid spec into RecognizerConfigs.

    Accepts {"grid": {field: [values...]}}; missing fields use defaults.
    """
    import itertools

    grid = doc.get("grid", doc)
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid file must carry a nonempty 'grid' object")
    fields = ("descriptor", "bins", "metric_h", "metric_d", "w", "k")
    unknown = set(grid) - set(fields)
    if unknown:
        raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
    menus = []
    for f in fields:
        vals = grid.get(f)
        if vals is None:
            menus.append([None])
        elif isinstance(vals, list) and vals:
            menus.append(vals)
        else:
            raise ConfigError(f"grid field {f!r} must be a nonempty list")
    configs = []
    for combo in itertools.product(*menus):
        doc = {f: v for f, v in zip(fields, combo) if v is not None}
        configs.append(recognizer_config_from_dict(doc))
    return configs
