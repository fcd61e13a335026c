import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajcnn.codec import NormalizationSpec
from trajcnn.data import FS_NYC_BBOX, Dataset, Trajectory
from trajcnn.metrics import (
    REPORT_COLUMNS, MetricsReport, evaluate, hausdorff, mean_trr, n_generated_for, reports_to_csv,
    sliced_wasserstein, time_reversal_ratio, total_travelled_distance, ttd_metric, wasserstein_1d,
)

SPEC = NormalizationSpec.from_bbox(FS_NYC_BBOX)


def brute_hausdorff(a, b):
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def make_traj(tid, xy, day=None, hour=None):
    n = len(xy)
    day = np.zeros(n) if day is None else day
    hour = np.arange(n) % 24 if hour is None else hour
    lat = SPEC.lat[0] + np.asarray(xy)[:, 0] * (SPEC.lat[1] - SPEC.lat[0])
    lon = SPEC.lon[0] + np.asarray(xy)[:, 1] * (SPEC.lon[1] - SPEC.lon[0])
    return Trajectory(tid, np.column_stack([lat, lon, day, hour]))


def test_hausdorff_examples():
    a = np.random.default_rng(0).random((30, 2))
    assert hausdorff(a, a) == 0.0
    assert hausdorff([[0, 0]], [[3, 4]]) == 5.0
    with pytest.raises(ValueError):
        hausdorff(np.zeros((0, 2)), a)


def test_hausdorff_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.random((200, 2)), rng.random((150, 2))
        assert hausdorff(a, b) == brute_hausdorff(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hausdorff_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((rng.integers(1, 60), 2)), rng.random((rng.integers(1, 60), 2))
    assert hausdorff(a, b) == hausdorff(b, a) >= 0


def test_wasserstein_examples():
    u = np.random.default_rng(0).random(50)
    assert wasserstein_1d(u, u) == 0
    assert wasserstein_1d(u, u + 0.3) == pytest.approx(0.3, abs=1e-12)
    assert wasserstein_1d([0, 1], [0, 0]) == 0.5
    with pytest.raises(ValueError):
        wasserstein_1d([], [1.0])


def test_wasserstein_unequal_sizes():
    # quantile integral: {0} vs {0, 1} -> half the mass moves distance 1
    assert wasserstein_1d([0.0], [0.0, 1.0]) == pytest.approx(0.5)
    from scipy.stats import wasserstein_distance
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=37), rng.normal(1, 2, size=91)
    assert wasserstein_1d(u, v) == pytest.approx(wasserstein_distance(u, v), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wasserstein_triangle(seed):
    rng = np.random.default_rng(seed)
    u, v, w = (rng.normal(size=rng.integers(1, 40)) for _ in range(3))
    assert wasserstein_1d(u, w) <= wasserstein_1d(u, v) + wasserstein_1d(v, w) + 1e-9


def test_swd_basic():
    a = np.random.default_rng(2).random((300, 2))
    assert sliced_wasserstein(a, a, 50, seed=3) == 0
    b = a[::-1]
    assert sliced_wasserstein(a, b, 50, seed=3) == pytest.approx(0, abs=1e-15)
    assert sliced_wasserstein(a, a + 0.1, 50, 7) == sliced_wasserstein(a, a + 0.1, 50, 7)
    assert sliced_wasserstein(a, a + [0.2, 0], 50, 7) == pytest.approx(sliced_wasserstein(a + [0.2, 0], a, 50, 7))


def test_swd_translation_oracle():
    rng = np.random.default_rng(3)
    a = rng.random((1000, 2))
    c = 0.4
    theta = np.random.default_rng(99).uniform(0, 2 * np.pi, 100_000)
    mc = np.mean(np.abs(c * np.cos(theta)))
    assert mc == pytest.approx(2 * c / np.pi, rel=1e-2)
    assert sliced_wasserstein(a, a + [c, 0], 500, seed=0) == pytest.approx(mc, rel=0.05)


def test_swd_variance_shrinks():
    rng = np.random.default_rng(4)
    a, b = rng.random((200, 2)), rng.normal(0.5, 0.1, (200, 2))
    few = [sliced_wasserstein(a, b, 10, s) for s in range(20)]
    many = [sliced_wasserstein(a, b, 1000, s) for s in range(20)]
    assert np.var(many) < np.var(few)


def test_ttd():
    assert total_travelled_distance(np.array([[0.0, 0.0]])) == 0
    assert total_travelled_distance(np.array([[0, 0], [3, 4], [3, 4]], float)) == 5
    p = np.random.default_rng(5).random((50, 2))
    oracle = 0.0
    for i in range(49, 0, -1):
        oracle += np.hypot(*(p[i] - p[i - 1]))
    assert total_travelled_distance(p) == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(ValueError):
        total_travelled_distance(np.zeros((0, 2)))


def test_ttd_metric():
    rng = np.random.default_rng(6)
    real = Dataset("r", [make_traj(str(i), rng.random((20, 2)) * 0.4) for i in range(8)], FS_NYC_BBOX)
    assert ttd_metric(real, real, SPEC) == 0
    scaled = Dataset("s", [make_traj(t.id, 2 * (xy := _norm_xy(t)) - xy[0]) for t in real], FS_NYC_BBOX)
    d1 = [total_travelled_distance(_norm_xy(t)) for t in real]
    d2 = [total_travelled_distance(_norm_xy(t)) for t in scaled]
    np.testing.assert_allclose(d2, 2 * np.array(d1), rtol=1e-9)
    assert ttd_metric(real, scaled, SPEC) == pytest.approx(wasserstein_1d(d1, d2), rel=1e-9)
    assert wasserstein_1d([1.0], [4.0]) == 3


def _norm_xy(t):
    return np.column_stack([(t.lat - SPEC.lat[0]) / (SPEC.lat[1] - SPEC.lat[0]),
                            (t.lon - SPEC.lon[0]) / (SPEC.lon[1] - SPEC.lon[0])])


def test_trr_fixtures():
    assert time_reversal_ratio(make_traj("a", np.zeros((6, 2)), hour=np.arange(6))) == 0
    assert time_reversal_ratio([10, 8, 6, 4, 2]) == 1
    assert time_reversal_ratio([1, 2, 1, 3]) == pytest.approx(1 / 3, abs=0)
    with pytest.raises(ValueError):
        time_reversal_ratio([1])
    # Sunday 23h -> Monday 0h wraps backwards in tau
    assert time_reversal_ratio(make_traj("w", np.zeros((2, 2)), day=np.array([6, 0]), hour=np.array([23, 0]))) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trr_spatially_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    day, hour = rng.integers(0, 7, n), rng.integers(0, 24, n)
    a = make_traj("a", rng.random((n, 2)), day, hour)
    b = make_traj("b", rng.random((n, 2)), day, hour)
    assert time_reversal_ratio(a) == time_reversal_ratio(b)
    assert 0 <= time_reversal_ratio(a) <= 1


def test_mean_trr_skips_single_points():
    ds = Dataset("d", [make_traj("a", np.zeros((1, 2))), make_traj("b", np.zeros((3, 2)), hour=np.array([3, 2, 1]))],
                 FS_NYC_BBOX)
    assert mean_trr(ds) == 1.0


def test_evaluate_identity_and_determinism():
    rng = np.random.default_rng(7)
    real = Dataset("r", [make_traj(str(i), rng.random((144, 2))) for i in range(5)], FS_NYC_BBOX)
    rep = evaluate(real, real, SPEC, n_projections=50, swd_samples=300, seed=1)
    assert rep.hausdorff == 0 and rep.sliced_wasserstein == 0 and rep.ttd_wasserstein == 0
    again = evaluate(real, real, SPEC, n_projections=50, swd_samples=300, seed=1)
    assert rep.to_json() == again.to_json()
    assert n_generated_for(Dataset("x", real.trajectories[:2], FS_NYC_BBOX)) == 2


def test_evaluate_needs_enough_points():
    rng = np.random.default_rng(8)
    real = Dataset("r", [make_traj(str(i), rng.random((100, 2))) for i in range(3)], FS_NYC_BBOX)
    gen = Dataset("g", [make_traj("g", rng.random((144, 2)))], FS_NYC_BBOX)
    with pytest.raises(ValueError):
        evaluate(real, gen, SPEC)
    gen3 = Dataset("g", [make_traj(str(i), rng.random((144, 2))) for i in range(3)], FS_NYC_BBOX)
    assert evaluate(real, gen3, SPEC, 20, 100).hausdorff > 0


def test_reports_csv():
    reps = [MetricsReport(0.1 * i, 0.2, 0.3, 0.0, {"fold": i, "steps": 10, "seed": 0}) for i in range(5)]
    text = reports_to_csv(reps)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 7
    assert lines[-1].split(",")[4] == "aggregate" and "±" in lines[-1]
    assert json.loads(reps[1].to_json())["metadata"]["fold"] == 1
