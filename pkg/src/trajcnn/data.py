"""Trajectory containers, loaders for the FS-NYC CSV and Geolife PLT formats,
bounding-box preprocessing and k-fold splitting."""
import csv
import datetime as dt
import logging
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError, ParseError

log = logging.getLogger(__name__)

FS_COLUMNS = ("tid", "lat", "lon", "day", "hour")
PLT_HEADER_LINES = 6


class Point(NamedTuple):
    lat: float
    lon: float
    day: int
    hour: int


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"degenerate bounding box {self}")
        if not (-90 <= self.lat_min and self.lat_max <= 90 and -180 <= self.lon_min and self.lon_max <= 180):
            raise ValueError(f"bounding box outside WGS84 range: {self}")

    def contains(self, lat, lon):
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return (lat >= self.lat_min) & (lat <= self.lat_max) & (lon >= self.lon_min) & (lon <= self.lon_max)

    def as_dict(self):
        return {"lat_min": self.lat_min, "lat_max": self.lat_max,
                "lon_min": self.lon_min, "lon_max": self.lon_max}


# New York City area used for FS-NYC, and Beijing's fourth ring road for Geolife.
FS_NYC_BBOX = BoundingBox(40.6811, 40.8411, -74.0785, -73.8585)
GEOLIFE_BBOX = BoundingBox(39.8279, 39.9877, 116.2676, 116.4857)


def _validate_points(points):
    lat, lon, day, hour = points.T
    if not (np.all(np.abs(lat) <= 90) and np.all(np.abs(lon) <= 180)):
        raise ValueError("latitude/longitude outside WGS84 range")
    for name, v, hi in (("day", day, 6), ("hour", hour, 23)):
        if np.any(v < 0) or np.any(v > hi) or np.any(v != np.round(v)):
            raise ValueError(f"{name} values must be integers in [0, {hi}]")


class Trajectory:
    """Ordered sequence of (lat, lon, day, hour) points.

    ``points`` is a read-only float64 array of shape ``[n, 4]``.
    """

    __slots__ = ("id", "points")

    def __init__(self, id, points):
        arr = np.array(points, dtype=np.float64).reshape(-1, 4)
        if len(arr) == 0:
            raise ValueError("a trajectory needs at least one point")
        _validate_points(arr)
        arr.setflags(write=False)
        self.id = str(id)
        self.points = arr

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for lat, lon, day, hour in self.points:
            yield Point(float(lat), float(lon), int(day), int(hour))

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.id == other.id
                and np.array_equal(self.points, other.points))

    def __repr__(self):
        return f"Trajectory(id={self.id!r}, n={len(self)})"

    @property
    def lat(self):
        return self.points[:, 0]

    @property
    def lon(self):
        return self.points[:, 1]

    @property
    def day(self):
        return self.points[:, 2].astype(int)

    @property
    def hour(self):
        return self.points[:, 3].astype(int)


@dataclass(frozen=True)
class Dataset:
    name: str
    trajectories: tuple
    bbox: BoundingBox

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    @property
    def n_points(self):
        return sum(len(t) for t in self.trajectories)

    def lengths(self):
        return np.array([len(t) for t in self.trajectories], dtype=int)

    def point_array(self):
        """All points stacked into an ``[N, 4]`` array."""
        if not self.trajectories:
            return np.zeros((0, 4))
        return np.concatenate([t.points for t in self.trajectories])


def load_fs_csv(path, bbox=FS_NYC_BBOX, name=None):
    """Read a CSV with at least the columns ``tid, lat, lon, day, hour``.

    One trajectory per distinct ``tid`` (order of first appearance), points in
    file order.  Extra columns are ignored.
    """
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in FS_COLUMNS:
            if col not in header:
                raise FormatError(f"{path}: missing column {col!r}")
        for row in reader:
            line = reader.line_num
            try:
                lat, lon = float(row["lat"]), float(row["lon"])
                day, hour = float(row["day"]), float(row["hour"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: non-numeric value in {row}", row=line) from None
            try:
                _validate_points(np.array([[lat, lon, day, hour]]))
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", row=line) from None
            groups.setdefault(row["tid"], []).append((lat, lon, day, hour))
    trajs = [Trajectory(tid, pts) for tid, pts in groups.items()]
    return Dataset(name or os.path.splitext(os.path.basename(path))[0], trajs, bbox)


def write_csv(ds, path):
    """Write ``ds`` in the FS column layout (readable by :func:`load_fs_csv`)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FS_COLUMNS)
        for t in ds:
            for lat, lon, day, hour in t.points:
                w.writerow((t.id, repr(float(lat)), repr(float(lon)), int(day), int(hour)))


def parse_plt_record(line):
    """Parse one PLT record into a :class:`Point`.

    Records look like ``lat,lon,0,altitude,days,date,time``; weekday uses
    Monday = 0.
    """
    fields = line.strip().split(",")
    if len(fields) < 7:
        raise ValueError(f"expected 7 fields, got {len(fields)}")
    lat, lon = float(fields[0]), float(fields[1])
    if abs(lat) > 90 or abs(lon) > 180:
        raise ValueError("coordinates out of range")
    date = dt.date.fromisoformat(fields[5].strip())
    hour = dt.time.fromisoformat(fields[6].strip()).hour
    return Point(lat, lon, date.weekday(), hour)


def _read_plt(path):
    points = []
    with open(path) as fh:
        for _ in range(PLT_HEADER_LINES):
            next(fh, None)
        for lineno, line in enumerate(fh, start=PLT_HEADER_LINES + 1):
            if not line.strip():
                continue
            try:
                points.append(parse_plt_record(line))
            except ValueError as exc:
                log.warning("%s:%d skipped malformed record (%s)", path, lineno, exc)
    return points


def load_geolife(root_dir, bbox=GEOLIFE_BBOX, name="geolife"):
    """Load every ``*.plt`` file under ``root_dir`` as one trajectory.

    Files are visited in sorted path order; the trajectory id is the path
    relative to ``root_dir`` without extension.  Unreadable files and
    malformed records are skipped with a log message.
    """
    paths = []
    for dirpath, _, files in os.walk(root_dir):
        paths += [os.path.join(dirpath, f) for f in files if f.lower().endswith(".plt")]
    trajs = []
    for path in sorted(paths):
        try:
            points = _read_plt(path)
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipped unreadable file %s (%s)", path, exc)
            continue
        if not points:
            log.warning("skipped %s: no valid records", path)
            continue
        tid = os.path.splitext(os.path.relpath(path, root_dir))[0].replace(os.sep, "/")
        trajs.append(Trajectory(tid, points))
    return Dataset(name, trajs, bbox)


def preprocess(ds, bbox, max_len=144, min_len=1):
    """Drop out-of-box points, truncate to ``max_len``, drop short trajectories."""
    if not max_len >= min_len >= 1:
        raise ValueError(f"need max_len >= min_len >= 1, got {max_len}, {min_len}")
    out = []
    for t in ds:
        inside = t.points[bbox.contains(t.lat, t.lon)][:max_len]
        if len(inside) >= min_len:
            out.append(Trajectory(t.id, inside))
    return Dataset(ds.name, out, bbox)


def split_folds(ds, k, seed):
    """Shuffle under ``seed`` and cut into ``k`` balanced test partitions.

    Returns a list of ``(train, test)`` datasets; the first ``len(ds) % k``
    test partitions hold one extra trajectory.  Both sides keep the original
    dataset order.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ds) < k:
        raise ValueError(f"cannot split {len(ds)} trajectories into {k} folds")
    perm = np.random.default_rng(seed).permutation(len(ds))
    folds = []
    for part in np.array_split(perm, k):
        test_idx = set(part.tolist())
        test = [t for i, t in enumerate(ds) if i in test_idx]
        train = [t for i, t in enumerate(ds) if i not in test_idx]
        folds.append((Dataset(ds.name, train, ds.bbox), Dataset(ds.name, test, ds.bbox)))
    return folds
