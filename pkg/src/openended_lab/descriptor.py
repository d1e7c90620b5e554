"""Global orthographic shape descriptor.

Pipeline: estimate a pose-normalized reference frame from the point
covariance, project the cloud onto the three frame planes, bin each
projection into a b x b distribution matrix, order the matrices by
information content, and concatenate into one L1-normalized histogram.

Conventions fixed here so the output is fully deterministic:
  * frame axes are covariance eigenvectors, eigenvalue-descending;
  * each axis sign makes the majority of point coordinates nonnegative
    (tie: the single largest-|coordinate| point is made positive);
  * Z is flipped afterwards if needed so the frame is right-handed;
  * projections are scaled by 1/rho, rho = max point distance from the
    centroid, so every normalized coordinate lies in [-1, 1];
  * a coordinate exactly on an interior cell edge falls in the
    higher-index cell, and +1 falls in the last cell;
  * matrices are ordered by descending entry entropy, ties by descending
    entry variance, remaining ties by the fixed plane order XoY, XoZ, YoZ.

Close eigenvalues make the eigenbasis arbitrary, so the frame raises
AmbiguousFrame instead of silently picking axes; callers that insist can
pass force=True, which orders eigenvectors inside each tied eigenvalue
group lexicographically after sign fixing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousFrame, DegenerateCloud, UnknownDescriptor
from .metrics import normalize_l1

PLANES = ("XoY", "XoZ", "YoZ")
_PLANE_COLS = {"XoY": (0, 1), "XoZ": (0, 2), "YoZ": (1, 2)}

EIGENGAP_RTOL = 1e-12


@dataclass(frozen=True)
class ReferenceFrame:
    """Pose-normalized object frame: centroid origin, eigenvector axes."""

    origin: np.ndarray  # (3,)
    axes: np.ndarray  # (3, 3), rows are the X, Y, Z axes
    eigenvalues: np.ndarray  # (3,), descending

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "axes", np.asarray(self.axes, dtype=np.float64).reshape(3, 3))
        object.__setattr__(
            self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64).reshape(3)
        )


@dataclass(frozen=True)
class DistributionMatrix:
    """One b x b orthographic projection histogram (entries sum to 1)."""

    plane: str
    bins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=np.float64))

    @property
    def b(self):
        return self.bins.shape[0]


@dataclass(frozen=True)
class GoodParams:
    bins: int = 30
    force_frame: bool = False

    def __post_init__(self):
        if not 2 <= self.bins <= 1000:
            raise ValueError(f"bins must be in [2, 1000], got {self.bins}")


def _fix_sign(vec, coords):
    """Sign an axis so most point coordinates along it are nonnegative."""
    pos = int(np.count_nonzero(coords > 0))
    neg = int(np.count_nonzero(coords < 0))
    if pos > neg:
        return vec
    if neg > pos:
        return -vec
    extreme = coords[np.argmax(np.abs(coords))]
    if extreme < 0:
        return -vec
    return vec


def reference_frame(cloud, force=False):
    """Estimate the object reference frame from the point covariance.

    Raises DegenerateCloud when the covariance has rank < 2 and
    AmbiguousFrame when adjacent eigenvalues are too close to order
    reliably; force=True replaces the latter with a lexicographic
    tie-break inside each equal-eigenvalue group.
    """
    pts = cloud.points
    origin = pts.mean(axis=0)
    centered = pts - origin
    cov = (centered.T @ centered) / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    lead = evals[0]
    if lead <= 0 or evals[1] <= EIGENGAP_RTOL * lead:
        raise DegenerateCloud(
            f"covariance rank < 2 (eigenvalues {evals.tolist()}); points nearly collinear"
        )
    gaps_close = (evals[0] - evals[1] < EIGENGAP_RTOL * lead) or (
        evals[1] - evals[2] < EIGENGAP_RTOL * lead
    )
    if gaps_close and not force:
        raise AmbiguousFrame(
            f"eigenvalue gaps below {EIGENGAP_RTOL} * lambda1 (eigenvalues {evals.tolist()}); "
            "axes are not uniquely ordered (retry with force to apply the lexicographic tie-break)"
        )

    axes = np.empty((3, 3))
    for i in range(3):
        v = evecs[:, i]
        axes[i] = _fix_sign(v, centered @ v)

    if force and gaps_close:
        # Within each tied eigenvalue group the eigenbasis is arbitrary;
        # sort the sign-fixed vectors lexicographically for repeatability.
        i = 0
        while i < 3:
            j = i
            while j + 1 < 3 and evals[i] - evals[j + 1] < EIGENGAP_RTOL * lead:
                j += 1
            if j > i:
                group = sorted(range(i, j + 1), key=lambda k: tuple(axes[k]))
                axes[i : j + 1] = axes[group]
            i = j + 1

    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]
    return ReferenceFrame(origin=origin, axes=axes, eigenvalues=evals)


def project(cloud, frame, plane, b):
    """Bin one orthographic projection into a b x b distribution matrix."""
    if plane not in _PLANE_COLS:
        raise ValueError(f"plane must be one of {PLANES}, got {plane!r}")
    if b < 2:
        raise ValueError(f"b must be >= 2, got {b}")
    q = (cloud.points - frame.origin) @ frame.axes.T
    rho = np.max(np.linalg.norm(q, axis=1))
    if rho == 0:
        raise DegenerateCloud("all points coincide with the centroid")
    q = q / rho
    ci, cj = _PLANE_COLS[plane]
    # floor sends an interior-edge coordinate to the higher-index cell;
    # the clip catches only the +1 boundary.
    rows = np.clip(np.floor((q[:, ci] + 1.0) * 0.5 * b).astype(np.int64), 0, b - 1)
    cols = np.clip(np.floor((q[:, cj] + 1.0) * 0.5 * b).astype(np.int64), 0, b - 1)
    counts = np.zeros((b, b), dtype=np.float64)
    np.add.at(counts, (rows, cols), 1.0)
    return DistributionMatrix(plane=plane, bins=counts / q.shape[0])


def entropy(matrix):
    """Shannon entropy (nats) of the matrix entries, 0 log 0 = 0."""
    p = matrix.bins[matrix.bins > 0]
    return float(-(p * np.log(p)).sum())


def variance(matrix):
    return float(np.var(matrix.bins))


def order_matrices(matrices):
    """Descending entropy, then descending variance, then fixed plane order."""
    keyed = sorted(
        matrices,
        key=lambda m: (-entropy(m), -variance(m), PLANES.index(m.plane)),
    )
    return keyed


def good_descriptor(cloud, params=GoodParams()):
    """Full descriptor: three ordered projections concatenated, L1-normalized.

    Returns a length 3*b^2 nonnegative vector summing to 1.
    """
    frame = reference_frame(cloud, force=params.force_frame)
    mats = [project(cloud, frame, plane, params.bins) for plane in PLANES]
    ordered = order_matrices(mats)
    flat = np.concatenate([m.bins.reshape(-1) for m in ordered])
    return normalize_l1(flat)


# Named-descriptor extension point. Entries map a lowercase name to a
# callable (cloud, bins) -> Histogram. Only "good" ships built in; other
# descriptors can be registered by downstream code.
_DESCRIPTORS = {}


def register_descriptor(name, fn):
    _DESCRIPTORS[name.lower()] = fn


def compute_descriptor(name, cloud, bins=30, force_frame=False):
    key = name.lower()
    if key == "good":
        return good_descriptor(cloud, GoodParams(bins=bins, force_frame=force_frame))
    if key in _DESCRIPTORS:
        return _DESCRIPTORS[key](cloud, bins)
    raise UnknownDescriptor(
        f"unknown descriptor {name!r}; built in: 'good', registered: {sorted(_DESCRIPTORS)}"
    )


def descriptor_names():
    return ("good",) + tuple(sorted(_DESCRIPTORS))
