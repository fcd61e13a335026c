"""Small synthetic trajectory corpora for tests, demos and smoke runs."""
from dataclasses import dataclass

import numpy as np

from .data import FS_NYC_BBOX, Dataset, Trajectory


@dataclass(frozen=True)
class SyntheticToySpec:
    """Random walks around a few cluster anchors.

    Hours increase monotonically along each trajectory, so real data has a
    time-reversal ratio of exactly zero.
    """

    centers: tuple = ((0.3, 0.3), (0.7, 0.7))
    spread: float = 0.05
    step: float = 0.01
    per_cluster: int = 250
    length: int = 144
    seed: int = 0


def make_toy_dataset(spec=SyntheticToySpec(), bbox=FS_NYC_BBOX, name="toy"):
    rng = np.random.default_rng(spec.seed)
    lo = np.array([bbox.lat_min, bbox.lon_min])
    span = np.array([bbox.lat_max - bbox.lat_min, bbox.lon_max - bbox.lon_min])
    hour = (np.arange(spec.length) * 24) // spec.length
    trajs = []
    for c, center in enumerate(spec.centers):
        for i in range(spec.per_cluster):
            anchor = np.asarray(center) + rng.normal(0, spec.spread, 2)
            walk = anchor + np.cumsum(rng.normal(0, spec.step, (spec.length, 2)), axis=0)
            xy = np.clip(walk, 0.0, 1.0) * span + lo
            day = np.full(spec.length, float(rng.integers(0, 7)))
            pts = np.column_stack([xy, day, hour.astype(float)])
            trajs.append(Trajectory(f"toy-{c}-{i}", pts))
    return Dataset(name, tuple(trajs), bbox)
