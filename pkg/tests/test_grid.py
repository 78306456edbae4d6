import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajfair.errors import InputError
from trajfair.grid import (METERS_PER_DEGREE, GridSpec, Heatmap, build_heatmap, cohort_spec,
                           integrate_heatmaps, project_to_cell, read_heatmap_csv, to_gray8,
                           write_heatmap_csv, write_heatmap_pgm)
from trajfair.ingest import GeoPoint, Trajectory
from trajfair.synthetic import random_walk_cohort

SPEC = GridSpec(39.9, 40.0, 116.3, 116.4, 100.0)


def north_east(spec, north_m, east_m):
    lat = spec.min_lat + north_m / METERS_PER_DEGREE
    lon = spec.min_lon + east_m / (METERS_PER_DEGREE * math.cos(math.radians((spec.min_lat + spec.max_lat) / 2)))
    return GeoPoint(lat, lon, 0.0)


def test_spec_dimensions():
    assert SPEC.rows == math.ceil(0.1 * METERS_PER_DEGREE / 100)
    assert SPEC.cols == math.ceil(SPEC.width_m / 100)
    with pytest.raises(InputError):
        GridSpec(1, 1, 0, 1, 10)
    with pytest.raises(InputError):
        GridSpec(0, 1, 0, 1, 0)


def test_project_examples():
    assert project_to_cell(GeoPoint(SPEC.min_lat, SPEC.min_lon, 0), SPEC) == (0, 0)
    assert project_to_cell(north_east(SPEC, 150, 50), SPEC) == (1, 0)
    assert project_to_cell(GeoPoint(41.0, 116.35, 0), SPEC) is None
    # far corner stays inside the last cell
    assert project_to_cell(GeoPoint(SPEC.max_lat, SPEC.max_lon, 0), SPEC) == (SPEC.rows - 1, SPEC.cols - 1)


def test_heatmap_single_cell():
    pts = tuple(north_east(SPEC, 10 + i, 20 + i) for i in range(4))
    h = build_heatmap(Trajectory("u", pts), SPEC)
    assert h.counts[0, 0] == 4 and h.total == 4 and h.nonzero_cells == 1


def test_heatmap_all_outside():
    t = Trajectory("u", (GeoPoint(10, 10, 0), GeoPoint(10, 10, 1)))
    h = build_heatmap(t, SPEC)
    assert h.total == 0 and h.outside == 2


def test_heatmap_matches_per_point_projection(rng):
    lats = rng.uniform(SPEC.min_lat, SPEC.max_lat, 10)
    lons = rng.uniform(SPEC.min_lon, SPEC.max_lon, 10)
    t = Trajectory.from_arrays("u", np.arange(10), lats, lons)
    h = build_heatmap(t, SPEC)
    expected = np.zeros(SPEC.shape, dtype=int)
    for p in t.points:
        expected[project_to_cell(p, SPEC)] += 1
    assert np.array_equal(h.counts, expected) and h.total == 10


def _random_map(rng, spec):
    return Heatmap(spec, rng.integers(0, 4, spec.shape))


def test_integrate(rng):
    h = _random_map(rng, SPEC)
    assert integrate_heatmaps([h]) == h
    a = np.zeros(SPEC.shape, int); a[0, 0] = 2
    b = np.zeros(SPEC.shape, int); b[3, 4] = 5
    merged = integrate_heatmaps([Heatmap(SPEC, a), Heatmap(SPEC, b)])
    assert merged.counts[0, 0] == 2 and merged.counts[3, 4] == 5 and merged.total == 7
    maps = [_random_map(rng, SPEC) for _ in range(5)]
    assert integrate_heatmaps(maps).total == sum(m.total for m in maps)
    with pytest.raises(InputError):
        integrate_heatmaps([h, Heatmap(SPEC.with_cell_size(200), np.zeros((56, 43), int))])
    with pytest.raises(InputError):
        integrate_heatmaps([])


def test_integrate_commutative_associative(rng):
    a, b, c = (_random_map(rng, SPEC) for _ in range(3))
    assert integrate_heatmaps([a, b]) == integrate_heatmaps([b, a])
    assert (integrate_heatmaps([integrate_heatmaps([a, b]), c])
            == integrate_heatmaps([a, integrate_heatmaps([b, c])]))


def test_coarsening_nested():
    # extents are exact multiples of both cell sizes
    fine = GridSpec(0.0, 2000 / METERS_PER_DEGREE, 0.0, 2000 / METERS_PER_DEGREE, 100.0)
    coarse = fine.with_cell_size(200.0)
    rng = np.random.default_rng(3)
    t = Trajectory.from_arrays("u", np.arange(300), rng.uniform(fine.min_lat, fine.max_lat, 300),
                               rng.uniform(fine.min_lon, fine.max_lon, 300))
    hf, hc = build_heatmap(t, fine), build_heatmap(t, coarse)
    assert hf.total == hc.total == 300
    for r in range(coarse.rows):
        for c in range(coarse.cols):
            block = hf.counts[2 * r:2 * r + 2, 2 * c:2 * c + 2]
            assert hc.counts[r, c] == block.sum() >= block.max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([50.0, 100.0, 300.0]))
def test_doubling_never_adds_cells(seed, g):
    traj = random_walk_cohort(1, 200, seed=seed)[0]
    spec = cohort_spec([traj], g)
    fine = build_heatmap(traj, spec)
    coarse = build_heatmap(traj, spec.with_cell_size(2 * g))
    assert coarse.nonzero_cells <= fine.nonzero_cells


def test_cohort_spec_padding():
    trajs = random_walk_cohort(3, 50, seed=1)
    spec = cohort_spec(trajs, 100)
    for t in trajs:
        assert build_heatmap(t, spec).outside == 0
    lats = np.concatenate([t.latitudes for t in trajs])
    assert spec.min_lat == pytest.approx(lats.min() - 100 / METERS_PER_DEGREE)


def test_export_roundtrip(tmp_path, rng):
    h = _random_map(rng, SPEC)
    write_heatmap_csv(h, tmp_path / "h.csv")
    assert read_heatmap_csv(tmp_path / "h.csv", SPEC) == h
    write_heatmap_pgm(h, tmp_path / "h.pgm")
    data = (tmp_path / "h.pgm").read_bytes()
    header = f"P5\n{SPEC.cols} {SPEC.rows}\n255\n".encode()
    assert data.startswith(header)
    img = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(SPEC.shape)
    assert np.array_equal(img, np.rint(255 * h.counts / h.counts.max()))
    assert to_gray8(Heatmap(SPEC, np.zeros(SPEC.shape, int))).max() == 0


def test_negative_counts_rejected():
    with pytest.raises(InputError):
        Heatmap(SPEC, -np.ones(SPEC.shape, int))
