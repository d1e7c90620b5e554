"""Point-cloud data model, ASCII PCD/PLY ingestion, and synthetic clouds.

Clouds are immutable value objects: an (N, 3) float64 array (marked
read-only) plus a source label. Only the ASCII subsets of PCD v0.7 and
PLY 1.0 are supported; binary variants are rejected up front. Data rows
containing NaN or infinite coordinates are dropped rather than fatal,
because real segmentation output contains invalid points; the drop count
is kept on the parsed cloud.

The synthetic generator produces clouds sampled on parametric surfaces
(box, ellipsoid, cylinder, sphere-shell, l-bracket) with optional isotropic
Gaussian jitter. It is a pure function of its spec: identical specs yield
bit-identical clouds, which the tests and demos rely on.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCloud, EmptyCloud, InvalidTransform, ParseError

SHAPE_KINDS = ("box", "ellipsoid", "cylinder", "sphere-shell", "l-bracket")

PCD_HEADER_KEYS = (
    "VERSION",
    "FIELDS",
    "SIZE",
    "TYPE",
    "COUNT",
    "WIDTH",
    "HEIGHT",
    "VIEWPOINT",
    "POINTS",
    "DATA",
)


@dataclass(frozen=True)
class PointCloud:
    """A finite set of 3D points for one segmented object view."""

    points: np.ndarray
    source_id: str = ""
    dropped_rows: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise EmptyCloud(f"cloud needs an (N, 3) array with N >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise EmptyCloud("cloud contains non-finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class ShapeSpec:
    """Recipe for one synthetic cloud: surface kind, size, count, jitter, seed."""

    kind: str
    extents: tuple
    point_count: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        ext = tuple(float(e) for e in self.extents)
        if len(ext) != 3 or any(e <= 0 for e in ext):
            raise ValueError("extents must be three positive reals")
        object.__setattr__(self, "extents", ext)
        if self.point_count < 8:
            raise ValueError("point_count must be at least 8")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def _float_cell(text, line_no):
    try:
        return float(text)
    except ValueError:
        raise ParseError(line_no, f"expected a number, got {text!r}") from None


def _rows_to_cloud(rows, dropped, source_id):
    if not rows:
        raise EmptyCloud(f"{source_id or 'input'}: no valid points")
    return PointCloud(np.array(rows, dtype=np.float64), source_id=source_id, dropped_rows=dropped)


def _as_text(data):
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError(0, "not valid text; ascii only") from None
    return data


def parse_pcd(data, source_id=""):
    """Parse an ASCII PCD v0.7 document into a PointCloud.

    The header must carry FIELDS including x, y and z, a POINTS count, and
    DATA ascii. Rows whose x/y/z are NaN or infinite are dropped and counted
    in the result's dropped_rows.
    """
    lines = _as_text(data).splitlines()
    header = {}
    data_start = None
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0].upper()
        if key not in PCD_HEADER_KEYS:
            raise ParseError(i + 1, f"unknown header key {parts[0]!r}")
        header[key] = parts[1:]
        if key == "DATA":
            data_start = i + 1
            break
    if data_start is None:
        raise ParseError(len(lines), "missing DATA line")
    for required in ("FIELDS", "POINTS", "DATA"):
        if required not in header:
            raise ParseError(data_start, f"missing {required} in header")
    if "VERSION" in header and header["VERSION"] and header["VERSION"][0] not in (".7", "0.7"):
        raise ParseError(data_start, f"unsupported PCD version {header['VERSION'][0]!r}")
    if not header["DATA"] or header["DATA"][0].lower() != "ascii":
        raise ParseError(data_start, "DATA must be ascii")

    fields = header["FIELDS"]
    counts = [1] * len(fields)
    if "COUNT" in header:
        if len(header["COUNT"]) != len(fields):
            raise ParseError(data_start, "COUNT arity does not match FIELDS")
        counts = [int(c) for c in header["COUNT"]]
    offsets = {}
    col = 0
    for name, cnt in zip(fields, counts):
        offsets[name.lower()] = col
        col += cnt
    total_cols = col
    for axis in ("x", "y", "z"):
        if axis not in offsets:
            raise ParseError(data_start, f"FIELDS must include x y z, missing {axis!r}")

    try:
        declared = int(header["POINTS"][0])
    except (ValueError, IndexError):
        raise ParseError(data_start, "POINTS must be an integer") from None
    if "WIDTH" in header and "HEIGHT" in header:
        try:
            wh = int(header["WIDTH"][0]) * int(header["HEIGHT"][0])
        except (ValueError, IndexError):
            raise ParseError(data_start, "WIDTH/HEIGHT must be integers") from None
        if wh != declared:
            raise ParseError(data_start, f"WIDTH*HEIGHT = {wh} but POINTS = {declared}")

    rows = []
    dropped = 0
    seen = 0
    for i in range(data_start, len(lines)):
        line = lines[i].strip()
        if not line:
            continue
        seen += 1
        if seen > declared:
            raise ParseError(i + 1, f"more data rows than POINTS = {declared}")
        cells = line.split()
        if len(cells) != total_cols:
            raise ParseError(i + 1, f"expected {total_cols} columns, got {len(cells)}")
        xyz = [_float_cell(cells[offsets[a]], i + 1) for a in ("x", "y", "z")]
        if all(math.isfinite(v) for v in xyz):
            rows.append(xyz)
        else:
            dropped += 1
    if seen != declared:
        raise ParseError(len(lines), f"expected {declared} data rows, got {seen}")
    return _rows_to_cloud(rows, dropped, source_id)


def parse_ply(data, source_id=""):
    """Parse an ASCII PLY 1.0 document; only the vertex x/y/z subset is read."""
    lines = _as_text(data).splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(1, "not a PLY file (missing 'ply' magic)")

    elements = []  # (name, count, [property names])
    fmt_seen = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("comment"):
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError(i, "ascii only")
            fmt_seen = True
        elif kw == "element":
            if len(parts) != 3:
                raise ParseError(i, "malformed element line")
            try:
                elements.append([parts[1], int(parts[2]), []])
            except ValueError:
                raise ParseError(i, "element count must be an integer") from None
        elif kw == "property":
            if not elements:
                raise ParseError(i, "property before any element")
            elements[-1][2].append(parts[-1])
        elif kw == "end_header":
            body_start = i
            break
        else:
            raise ParseError(i, f"unknown header keyword {kw!r}")
    if body_start is None:
        raise ParseError(len(lines), "missing end_header")
    if not fmt_seen:
        raise ParseError(body_start, "missing format line")

    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise ParseError(body_start, "no vertex element")
    props = vertex[2]
    for axis in ("x", "y", "z"):
        if axis not in props:
            raise ParseError(body_start, f"vertex element missing property {axis!r}")
    idx = {a: props.index(a) for a in ("x", "y", "z")}

    body = [ln.strip() for ln in lines[body_start:] if ln.strip()]
    cursor = 0
    rows = []
    dropped = 0
    for name, count, eprops in elements:
        if name == "vertex":
            if cursor + count > len(body):
                raise ParseError(body_start, f"vertex element declares {count} rows, found {len(body) - cursor}")
            for j in range(count):
                cells = body[cursor + j].split()
                if len(cells) != len(eprops):
                    raise ParseError(body_start + cursor + j + 1, f"expected {len(eprops)} values, got {len(cells)}")
                xyz = [_float_cell(cells[idx[a]], body_start + cursor + j + 1) for a in ("x", "y", "z")]
                if all(math.isfinite(v) for v in xyz):
                    rows.append(xyz)
                else:
                    dropped += 1
        cursor += count
        if cursor > len(body):
            raise ParseError(len(lines), f"element {name!r} declares more rows than present")
    if cursor < len(body):
        raise ParseError(len(lines), f"{len(body) - cursor} data rows beyond declared elements")
    return _rows_to_cloud(rows, dropped, source_id)


def write_pcd(cloud):
    """Serialize a cloud as ASCII PCD v0.7; coordinates round-trip exactly."""
    n = len(cloud)
    head = [
        "VERSION .7",
        "FIELDS x y z",
        "SIZE 8 8 8",
        "TYPE F F F",
        "COUNT 1 1 1",
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA ascii",
    ]
    rows = [" ".join(repr(float(v)) for v in p) for p in cloud.points]
    return "\n".join(head + rows) + "\n"


def write_ply(cloud):
    """Serialize a cloud as ASCII PLY 1.0 vertices."""
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    rows = [" ".join(repr(float(v)) for v in p) for p in cloud.points]
    return "\n".join(head + rows) + "\n"


def load_cloud(path):
    """Read a .pcd or .ply file from disk, picking the parser by extension."""
    text = open(path, "rb").read()
    name = str(path).lower()
    if name.endswith(".pcd"):
        return parse_pcd(text, source_id=str(path))
    if name.endswith(".ply"):
        return parse_ply(text, source_id=str(path))
    raise ParseError(0, f"unsupported cloud file extension: {path}")


def save_cloud(cloud, path):
    name = str(path).lower()
    if name.endswith(".pcd"):
        text = write_pcd(cloud)
    elif name.endswith(".ply"):
        text = write_ply(cloud)
    else:
        raise ParseError(0, f"unsupported cloud file extension: {path}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def transform(cloud, rotation, translation, scale=1.0):
    """Apply p -> scale * R @ p + t to every point, preserving order."""
    r = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    if r.shape != (3, 3):
        raise InvalidTransform(f"rotation must be 3x3, got {r.shape}")
    if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9:
        raise InvalidTransform("rotation is not orthonormal within 1e-9")
    if not scale > 0:
        raise InvalidTransform(f"scale must be positive, got {scale}")
    pts = scale * (cloud.points @ r.T) + t
    return PointCloud(pts, source_id=cloud.source_id, dropped_rows=cloud.dropped_rows)


def random_rotation(rng):
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def _box_surface(rng, n, ex, ey, ez):
    hx, hy, hz = ex / 2.0, ey / 2.0, ez / 2.0
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for f in range(6):
        m = faces == f
        if f < 2:  # +-x faces
            pts[m] = np.column_stack([np.full(m.sum(), hx if f == 0 else -hx), u[m] * hy, v[m] * hz])
        elif f < 4:  # +-y faces
            pts[m] = np.column_stack([u[m] * hx, np.full(m.sum(), hy if f == 2 else -hy), v[m] * hz])
        else:  # +-z faces
            pts[m] = np.column_stack([u[m] * hx, v[m] * hy, np.full(m.sum(), hz if f == 4 else -hz)])
    return pts


def _ellipsoid_surface(rng, n, ex, ey, ez):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * np.array([ex / 2.0, ey / 2.0, ez / 2.0])


def _cylinder_surface(rng, n, ex, ey, ez):
    rx, ry, h = ex / 2.0, ey / 2.0, ez
    # Ramanujan approximation of the elliptical cross-section perimeter.
    per = math.pi * (3 * (rx + ry) - math.sqrt((3 * rx + ry) * (rx + 3 * ry)))
    cap = math.pi * rx * ry
    areas = np.array([per * h, cap, cap])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    u = rng.uniform(0.0, 1.0, size=n)
    pts = np.empty((n, 3))
    side = part == 0
    pts[side] = np.column_stack(
        [rx * np.cos(theta[side]), ry * np.sin(theta[side]), (u[side] - 0.5) * h]
    )
    for p, zsign in ((1, 1.0), (2, -1.0)):
        m = part == p
        r = np.sqrt(u[m])
        pts[m] = np.column_stack(
            [rx * r * np.cos(theta[m]), ry * r * np.sin(theta[m]), np.full(m.sum(), zsign * h / 2.0)]
        )
    return pts


def _shell_surface(rng, n, ex, ey, ez):
    # Open spherical shell (bowl): polar cap above cos(phi) = 0.3 removed.
    cos_phi = rng.uniform(-1.0, 0.3, size=n)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    sin_phi = np.sqrt(1.0 - cos_phi**2)
    d = np.column_stack([sin_phi * np.cos(theta), sin_phi * np.sin(theta), cos_phi])
    return d * np.array([ex / 2.0, ey / 2.0, ez / 2.0])


def _bracket_surface(rng, n, ex, ey, ez):
    # Two orthogonal slabs forming an L: a floor flange plus an upright wall.
    t = 0.3
    flange = (ex, ey, t * ez)
    upright = (t * ex, ey, (1.0 - t) * ez)

    def area(e):
        return 2 * (e[0] * e[1] + e[0] * e[2] + e[1] * e[2])

    a_f, a_u = area(flange), area(upright)
    pick = rng.choice(2, size=n, p=np.array([a_f, a_u]) / (a_f + a_u))
    pts = np.empty((n, 3))
    nf = int((pick == 0).sum())
    f_pts = _box_surface(rng, nf, *flange)
    f_pts[:, 2] += -ez / 2.0 + t * ez / 2.0
    u_pts = _box_surface(rng, n - nf, *upright)
    u_pts[:, 0] += -ex / 2.0 + t * ex / 2.0
    u_pts[:, 2] += t * ez / 2.0
    pts[pick == 0] = f_pts
    pts[pick == 1] = u_pts
    return pts


_SAMPLERS = {
    "box": _box_surface,
    "ellipsoid": _ellipsoid_surface,
    "cylinder": _cylinder_surface,
    "sphere-shell": _shell_surface,
    "l-bracket": _bracket_surface,
}


def synthesize(spec):
    """Deterministically sample a cloud on the spec's surface."""
    rng = np.random.default_rng(spec.seed)
    pts = _SAMPLERS[spec.kind](rng, spec.point_count, *spec.extents)
    if spec.noise_sigma > 0:
        pts = pts + rng.normal(0.0, spec.noise_sigma, size=pts.shape)
    source = f"synthetic:{spec.kind}:{spec.extents}:{spec.point_count}:{spec.noise_sigma}:{spec.seed}"
    return PointCloud(pts, source_id=source)


def write_dataset_tree(
    root,
    categories,
    views_per_category,
    point_count=1500,
    noise_sigma=0.01,
    seed=0,
    instances_per_category=2,
    rotate=True,
    fmt="pcd",
):
    """Write a synthetic dataset directory: <root>/<category>/<instance>/<view>.pcd.

    `categories` maps a label to a (kind, extents) pair. Each view gets its
    own derived seed and, when `rotate` is set, a random rigid pose so the
    tree exercises the descriptor's pose invariance end to end.
    """
    import os

    rng = np.random.default_rng(seed)
    written = []
    for label in sorted(categories):
        kind, extents = categories[label]
        for v in range(views_per_category):
            spec = ShapeSpec(
                kind=kind,
                extents=extents,
                point_count=point_count,
                noise_sigma=noise_sigma,
                seed=int(rng.integers(0, 2**62)),
            )
            cloud = synthesize(spec)
            if rotate:
                cloud = transform(cloud, random_rotation(rng), rng.uniform(-1.0, 1.0, size=3), 1.0)
            inst = f"inst{v % instances_per_category}"
            out_dir = os.path.join(root, label, inst)
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, f"view{v:03d}.{fmt}")
            save_cloud(cloud, path)
            written.append(path)
    return written


DEMO_CATEGORIES = {
    "bar": ("box", (6.0, 1.2, 0.6)),
    "bowl": ("sphere-shell", (4.0, 3.2, 2.4)),
    "bracket": ("l-bracket", (4.0, 2.0, 3.0)),
    "brick": ("box", (4.0, 2.0, 1.0)),
    "melon": ("ellipsoid", (4.0, 2.6, 1.8)),
    "pipe": ("cylinder", (2.4, 1.4, 6.0)),
    "pod": ("ellipsoid", (5.0, 1.6, 0.9)),
    "tube": ("cylinder", (3.0, 2.0, 6.0)),
    "wedge": ("l-bracket", (6.0, 1.5, 4.5)),
    "plank": ("box", (5.0, 3.5, 0.5)),
}
