"""Reversible trajectory <-> grid transformation.

A trajectory of at most ``max_len`` points is min-max normalised feature by
feature and written row-major into a ``side x side x 4`` block (``side =
ceil(sqrt(max_len))``), zero-padded after the last point.  For the network
the block is upsampled 2x by replicating each cell into a 2x2 square; the
inverse keeps the top-left cell of every square and denormalises.
"""
import math
import struct
from dataclasses import dataclass

import numpy as np

from .data import BoundingBox, Dataset, Trajectory
from .errors import FormatError

FEATURES = ("lat", "lon", "day", "hour")
CHANNELS = len(FEATURES)
DAY_RANGE = (0.0, 6.0)
HOUR_RANGE = (0.0, 23.0)


def _check_bounds(lo, hi):
    if not lo < hi:
        raise ValueError(f"need min < max, got ({lo}, {hi})")


def normalize(f, lo, hi):
    """``(f - lo) / (hi - lo)``, clamped to ``[0, 1]``."""
    _check_bounds(lo, hi)
    v = (np.asarray(f, dtype=np.float64) - lo) / (hi - lo)
    v = np.clip(v, 0.0, 1.0)
    return float(v) if v.ndim == 0 else v


def denormalize(v, lo, hi):
    """``v * (hi - lo) + lo`` with ``v`` clamped to ``[0, 1]`` first."""
    _check_bounds(lo, hi)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    f = v * (hi - lo) + lo
    return float(f) if f.ndim == 0 else f


def denormalize_discrete(v, lo, hi):
    """Denormalise, then round half-up to an integer inside ``[lo, hi]``."""
    f = np.floor(np.asarray(denormalize(v, lo, hi)) + 0.5)
    f = np.clip(f, lo, hi)
    return int(f) if f.ndim == 0 else f.astype(int)


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-feature ``(min, max)`` bounds.

    Spatial bounds come from a public bounding box, never from the data;
    day and hour use their calendar ranges.
    """

    lat: tuple
    lon: tuple
    day: tuple = DAY_RANGE
    hour: tuple = HOUR_RANGE

    def __post_init__(self):
        for name in FEATURES:
            lo, hi = getattr(self, name)
            _check_bounds(lo, hi)

    @classmethod
    def from_bbox(cls, bbox):
        return cls((bbox.lat_min, bbox.lat_max), (bbox.lon_min, bbox.lon_max))

    def bounds(self):
        return np.array([getattr(self, f) for f in FEATURES], dtype=np.float64)

    def as_dict(self):
        return {f: list(getattr(self, f)) for f in FEATURES}

    @classmethod
    def from_dict(cls, d):
        return cls(*(tuple(d[f]) for f in FEATURES))


def grid_side(max_len):
    return math.isqrt(max_len - 1) + 1 if max_len > 0 else 0


@dataclass(frozen=True)
class TrajGrid:
    values: np.ndarray  # [side, side, channels]
    mask: np.ndarray  # [max_len], `length` ones then zeros
    length: int

    @property
    def side(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class UpscaledGrid:
    values: np.ndarray  # [2*side, 2*side, channels]


def make_mask(length, max_len):
    mask = np.zeros(max_len, dtype=np.float64)
    mask[:length] = 1.0
    return mask


def encode(t, spec, max_len=144):
    """Normalise ``t`` and place point ``j`` at cell ``(j // side, j % side)``."""
    n = len(t)
    if n > max_len:
        raise ValueError(f"trajectory of length {n} exceeds max_len={max_len}")
    side = grid_side(max_len)
    b = spec.bounds()
    flat = np.zeros((side * side, CHANNELS), dtype=np.float64)
    flat[:n] = np.clip((t.points - b[:, 0]) / (b[:, 1] - b[:, 0]), 0.0, 1.0)
    return TrajGrid(flat.reshape(side, side, CHANNELS), make_mask(n, max_len), n)


def upsample(g):
    """Replicate every cell into a 2x2 square (nearest-neighbour upscaling)."""
    values = g.values if isinstance(g, TrajGrid) else np.asarray(g)
    return UpscaledGrid(np.repeat(np.repeat(values, 2, axis=-3), 2, axis=-2))


def downsample(u):
    """Keep the top-left cell of every 2x2 square.

    Accepts an :class:`UpscaledGrid` or an array ``[..., 2s, 2s, C]``.
    """
    values = u.values if isinstance(u, UpscaledGrid) else np.asarray(u)
    h, w = values.shape[-3], values.shape[-2]
    if h % 2 or w % 2:
        raise ValueError(f"upscaled grid must have even side length, got {h}x{w}")
    return values[..., ::2, ::2, :]


def decode(values, spec, length, id="generated"):
    """Read the first ``length`` cells row-major and denormalise them."""
    values = np.asarray(values, dtype=np.float64)
    side = values.shape[0]
    if not 0 < length <= side * side:
        raise ValueError(f"length {length} outside (0, {side * side}]")
    flat = values.reshape(side * side, -1)[:length]
    lat = denormalize(flat[:, 0], *spec.lat)
    lon = denormalize(flat[:, 1], *spec.lon)
    day = denormalize_discrete(flat[:, 2], *spec.day)
    hour = denormalize_discrete(flat[:, 3], *spec.hour)
    return Trajectory(id, np.column_stack([lat, lon, day, hour]))


def encode_dataset(ds, spec, max_len=144):
    """Encode every trajectory; returns ``(values [N,s,s,4], masks [N,max_len])``."""
    side = grid_side(max_len)
    values = np.zeros((len(ds), side, side, CHANNELS))
    masks = np.zeros((len(ds), max_len))
    for i, t in enumerate(ds):
        g = encode(t, spec, max_len)
        values[i] = g.values
        masks[i] = g.mask
    return values, masks


def decode_batch(values, spec, name="generated", bbox=None, length=None, id_prefix="gen"):
    """Decode a stack of ``[N, s, s, 4]`` grids at full length into a Dataset."""
    values = np.asarray(values)
    side = values.shape[1]
    length = side * side if length is None else length
    trajs = [decode(v, spec, length, id=f"{id_prefix}{i}") for i, v in enumerate(values)]
    if bbox is None:
        bbox = BoundingBox(spec.lat[0], spec.lat[1], spec.lon[0], spec.lon[1])
    return Dataset(name, trajs, bbox)


# -- binary grid files ---------------------------------------------------
GRID_MAGIC = b"RTCG"
_HEADER = struct.Struct("<4sIII")


def write_grids(path, grids):
    """Append-style file of records: 16-byte header then float32 values.

    Header is ``(magic, side, channels, length)``; values are little-endian
    float32 in (row, col, channel) order.
    """
    with open(path, "wb") as fh:
        for g in grids:
            side, _, ch = g.values.shape
            fh.write(_HEADER.pack(GRID_MAGIC, side, ch, g.length))
            fh.write(np.ascontiguousarray(g.values, dtype="<f4").tobytes())


def read_grids(path):
    """Inverse of :func:`write_grids`; the mask length is taken as ``side**2``."""
    grids = []
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0
    while off < len(data):
        magic, side, ch, length = _HEADER.unpack_from(data, off)
        if magic != GRID_MAGIC:
            raise FormatError(f"{path}: bad grid record magic at byte {off}")
        off += _HEADER.size
        n = side * side * ch
        values = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(side, side, ch)
        off += 4 * n
        grids.append(TrajGrid(values.astype(np.float64), make_mask(length, side * side), length))
    return grids
