"""Distributional utility metrics for generated trajectory datasets.

Spatial metrics (Hausdorff, sliced Wasserstein) compare point clouds,
TTD compares the distributions of per-trajectory path lengths, and TRR
counts backward steps in time.  ``evaluate`` works in the normalised
``[0, 1]^2`` space defined by a :class:`~trajcnn.codec.NormalizationSpec`.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset, Trajectory

REPORT_COLUMNS = ("hd", "swd", "ttd_wd", "trr", "fold", "steps", "seed")


def _as_points(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or len(a) == 0:
        raise ValueError(f"{name} must be a non-empty [n, d] point set")
    return a


def _directed_hausdorff(a, b):
    tree = cKDTree(b)
    k = min(2, len(b))
    _, idx = tree.query(a, k=k)
    idx = idx.reshape(len(a), k)
    # exact distances for the candidate neighbours, same formula as a brute-force scan
    diff = a[:, None, :] - b[idx]
    d = np.sqrt((diff * diff).sum(axis=-1)).min(axis=1)
    return d.max()


def hausdorff(a, b):
    """Symmetric Hausdorff distance under the Euclidean metric."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    return float(max(_directed_hausdorff(a, b), _directed_hausdorff(b, a)))


def wasserstein_1d(u, v):
    """First Wasserstein distance between two empirical 1-D distributions."""
    u = np.sort(np.asarray(u, dtype=np.float64).ravel())
    v = np.sort(np.asarray(v, dtype=np.float64).ravel())
    if len(u) == 0 or len(v) == 0:
        raise ValueError("wasserstein_1d needs non-empty samples")
    if len(u) == len(v):
        return float(np.mean(np.abs(u - v)))
    allv = np.concatenate([u, v])
    allv.sort()
    deltas = np.diff(allv)
    cdf_u = np.searchsorted(u, allv[:-1], side="right") / len(u)
    cdf_v = np.searchsorted(v, allv[:-1], side="right") / len(v)
    return float(np.sum(np.abs(cdf_u - cdf_v) * deltas))


def random_directions(n_projections, seed):
    theta = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, n_projections)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def sliced_wasserstein(a, b, n_projections=100, seed=0):
    """Mean 1-D Wasserstein distance over random unit-direction projections."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    dirs = random_directions(n_projections, seed)
    pa, pb = a @ dirs.T, b @ dirs.T
    if len(a) == len(b):
        return float(np.mean(np.abs(np.sort(pa, axis=0) - np.sort(pb, axis=0))))
    return float(np.mean([wasserstein_1d(pa[:, i], pb[:, i]) for i in range(n_projections)]))


def total_travelled_distance(t):
    """Sum of Euclidean distances between consecutive points.

    ``t`` is a Trajectory (lat/lon used as-is) or an ``[n, 2]`` array.
    """
    xy = t.points[:, :2] if isinstance(t, Trajectory) else np.asarray(t, dtype=np.float64)
    if len(xy) == 0:
        raise ValueError("empty trajectory")
    step = np.diff(xy, axis=0)
    return float(np.sqrt((step * step).sum(axis=1)).sum())


def _xy(t, spec):
    xy = t.points[:, :2]
    if spec is None:
        return xy
    b = spec.bounds()[:2]
    return (xy - b[:, 0]) / (b[:, 1] - b[:, 0])


def ttd_metric(real_ds, gen_ds, spec=None):
    """W1 between the per-trajectory TTD multisets (normalised space if ``spec``)."""
    if len(real_ds) == 0 or len(gen_ds) == 0:
        raise ValueError("ttd_metric needs non-empty datasets")
    real = [total_travelled_distance(_xy(t, spec)) for t in real_ds]
    gen = [total_travelled_distance(_xy(t, spec)) for t in gen_ds]
    return wasserstein_1d(real, gen)


def timestamps(t):
    """Scalar time key ``day * 24 + hour`` for every point."""
    return t.points[:, 2] * 24 + t.points[:, 3]


def time_reversal_ratio(t):
    """Fraction of consecutive pairs whose timestamp decreases.

    ``t`` is a Trajectory or a 1-D sequence of timestamps.
    """
    tau = timestamps(t) if isinstance(t, Trajectory) else np.asarray(t, dtype=np.float64)
    if len(tau) < 2:
        raise ValueError("time reversal ratio needs at least two points")
    return float(np.count_nonzero(tau[:-1] > tau[1:]) / (len(tau) - 1))


def mean_trr(ds):
    """Mean TRR over trajectories with at least two points."""
    vals = [time_reversal_ratio(t) for t in ds if len(t) >= 2]
    if not vals:
        raise ValueError("no trajectory with two or more points")
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    hausdorff: float
    sliced_wasserstein: float
    ttd_wasserstein: float
    trr: float
    metadata: dict = field(default_factory=dict)

    def row(self):
        m = self.metadata
        return {
            "hd": self.hausdorff, "swd": self.sliced_wasserstein, "ttd_wd": self.ttd_wasserstein,
            "trr": self.trr, "fold": m.get("fold", ""), "steps": m.get("steps", ""),
            "seed": m.get("seed", ""),
        }

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def reports_to_csv(reports, aggregate=True):
    """CSV text with one row per report plus an optional ``mean±std`` row."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.row().items()})
    if aggregate and reports:
        agg = {"fold": "aggregate", "steps": reports[0].metadata.get("steps", ""),
               "seed": reports[0].metadata.get("seed", "")}
        for col, attr in zip(REPORT_COLUMNS[:4], ("hausdorff", "sliced_wasserstein", "ttd_wasserstein", "trr")):
            vals = np.array([getattr(r, attr) for r in reports])
            agg[col] = f"{vals.mean():.6g}±{vals.std():.6g}"
        w.writerow(agg)
    return buf.getvalue()


def evaluate(real_test, generated, spec, n_projections=100, swd_samples=10_000, seed=0, metadata=None):
    """Compute all four metrics for ``generated`` against ``real_test``.

    The generated point cloud is truncated to the real point count before
    the Hausdorff distance; SWD uses up to ``swd_samples`` locations per
    side drawn without replacement.
    """
    if len(real_test) == 0 or len(generated) == 0:
        raise ValueError("evaluate needs non-empty datasets")
    n = real_test.n_points
    real_xy = np.concatenate([_xy(t, spec) for t in real_test])
    gen_xy = np.concatenate([_xy(t, spec) for t in generated])
    if len(gen_xy) < n:
        raise ValueError(f"generated set has {len(gen_xy)} points, real test set {n}")
    gen_xy = gen_xy[:n]
    # one index draw serves both sides: each is still a uniform sample, and
    # identical inputs give exactly zero
    idx = np.random.default_rng(seed).choice(n, min(swd_samples, n), replace=False)
    ra, ga = real_xy[idx], gen_xy[idx]
    return MetricsReport(
        hausdorff=hausdorff(real_xy, gen_xy),
        sliced_wasserstein=sliced_wasserstein(ra, ga, n_projections, seed),
        ttd_wasserstein=ttd_metric(real_test, generated, spec),
        trr=mean_trr(generated),
        metadata=dict(metadata or {}),
    )


def n_generated_for(real_test, traj_len=144):
    """Number of fixed-length trajectories needed to cover the real point count."""
    return math.ceil(real_test.n_points / traj_len)
