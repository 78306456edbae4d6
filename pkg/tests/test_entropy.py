import math

import numpy as np
import pytest

from trajfair.entropy import (EOTS, KINDS, EntropyParams, EntropyProfile, actual_entropy, entropy_profile,
                              entropy_similarity, fuzzy_entropy, lonlat_entropy, lz_match_lengths,
                              novelty_series, read_profiles_csv, sample_entropy_2d, shannon_entropy,
                              shannon_from_counts, write_profiles_csv)
from trajfair.errors import InputError
from trajfair.grid import METERS_PER_DEGREE, GridSpec, build_heatmap, cohort_spec
from trajfair.ingest import Trajectory, resample_trajectory
from trajfair.synthetic import random_walk, stationary

from oracles import actual_entropy_bruteforce, fuzzy_entropy_direct, lz_lengths_bruteforce, sampen2d_bruteforce

CELL_DEG = 100 / METERS_PER_DEGREE


def on_equator(uid, cells, dt=600.0):
    """Track visiting the given (row, col) cells of a 100 m grid at the origin, one fix each."""
    lat = [(r + 0.5) * CELL_DEG for r, _ in cells]
    lon = [(c + 0.5) * CELL_DEG for _, c in cells]
    return Trajectory.from_arrays(uid, dt * np.arange(len(cells)), lat, lon)


def entropy_heat(t, spec):
    return build_heatmap(resample_trajectory(t, 600.0), spec).counts


SPEC = GridSpec(0.0, 10 * CELL_DEG, 0.0, 10 * CELL_DEG, 100.0)


class TestShannon:
    def test_values(self):
        assert shannon_from_counts([5]) == 0.0
        assert shannon_from_counts([2, 2]) == 1.0
        assert shannon_from_counts([3, 1]) == pytest.approx(0.8113, abs=1e-4)
        assert shannon_from_counts([3, 1]) == pytest.approx(-(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25)))

    def test_from_trajectory(self):
        t = on_equator("a", [(1, 1)] * 3 + [(2, 2)])
        assert shannon_entropy(t, SPEC) == pytest.approx(0.8113, abs=1e-4)

    def test_bounded_by_log_cells(self, rng):
        for _ in range(50):
            c = rng.integers(0, 5, 12)
            if c.sum():
                assert 0 <= shannon_from_counts(c) <= math.log2(np.count_nonzero(c)) + 1e-12

    def test_empty(self):
        with pytest.raises(InputError):
            shannon_from_counts([0, 0])


class TestFuzzy:
    def test_constant_zero(self):
        assert fuzzy_entropy([3.0] * 30, 2, 0.2) == 0.0

    def test_matches_direct(self, rng):
        x = rng.normal(size=40)
        for m, npow in [(1, 2), (2, 2), (2, 1), (3, 2)]:
            r = 0.2 * x.std()
            assert fuzzy_entropy(x, m, r, npow) == pytest.approx(fuzzy_entropy_direct(x, m, r, npow), abs=1e-12)

    def test_regular_below_random(self, rng):
        alt = np.tile([0.0, 1.0], 50)
        noise = rng.normal(size=100)
        assert fuzzy_entropy(alt, 2, 0.2 * alt.std()) < fuzzy_entropy(noise, 2, 0.2 * noise.std())

    def test_nonnegative_on_samples(self):
        gen = np.random.default_rng(7)
        for _ in range(100):
            x = gen.normal(size=int(gen.integers(10, 60)))
            assert fuzzy_entropy(x, 2, 0.2 * x.std()) >= 0

    def test_bad_inputs(self):
        with pytest.raises(InputError):
            fuzzy_entropy([1.0, 2.0, 3.0], m=2)
        with pytest.raises(InputError):
            fuzzy_entropy(np.arange(10.0), r=0)
        with pytest.raises(InputError):
            fuzzy_entropy(np.arange(10.0), m=0)


class TestLonLat:
    def test_stationary(self):
        assert lonlat_entropy(stationary("s", 20)) == 0.0

    def test_single_axis_is_half(self):
        rng = np.random.default_rng(3)
        lon = rng.normal(size=60) * 1e-3
        t = Trajectory.from_arrays("e", 600.0 * np.arange(60), [10.0] * 60, 20 + lon)
        rs_lon = t.longitudes
        expected = fuzzy_entropy(rs_lon, 2, 0.2 * rs_lon.std()) / 2
        assert lonlat_entropy(t) == pytest.approx(expected, abs=1e-12)

    def test_random_walk_positive(self, rng):
        assert lonlat_entropy(random_walk("w", 300, rng)) > 0


class TestSampleEntropy2D:
    def test_constant_zero(self):
        assert sample_entropy_2d(np.full((6, 6), 4.0)) == 0.0
        assert sample_entropy_2d(np.zeros((5, 5))) == 0.0

    def test_matches_bruteforce(self, rng):
        for _ in range(5):
            img = rng.integers(0, 4, (6, 6)).astype(float)
            r = 0.2 * img.std()
            got = sample_entropy_2d(img, 1, r)
            want = sampen2d_bruteforce(img, 1, r)
            assert (got is None and want is None) or got == pytest.approx(want, abs=1e-12)

    def test_m2_matches_bruteforce(self, rng):
        img = rng.integers(0, 2, (7, 7)).astype(float)
        assert sample_entropy_2d(img, 2, 0.5) == pytest.approx(sampen2d_bruteforce(img, 2, 0.5), abs=1e-12)

    def test_single_bright_pixel(self):
        img = np.zeros((6, 6))
        img[2, 3] = 9.0
        got = sample_entropy_2d(img)
        assert got == pytest.approx(sampen2d_bruteforce(img, 1, 0.2 * img.std()), abs=1e-12)
        assert got > 0

    def test_undefined_returns_none(self):
        img = np.arange(16.0).reshape(4, 4)
        assert sample_entropy_2d(img, 1, 0.5) is None

    def test_log_scale_applies_log1p(self, rng):
        img = rng.integers(0, 30, (6, 6)).astype(float)
        assert sample_entropy_2d(img, log_scale=True) == sample_entropy_2d(np.log1p(img))

    def test_too_small(self):
        with pytest.raises(InputError):
            sample_entropy_2d(np.ones((2, 2)))


class TestNoveltyAndLZ:
    def test_novelty_revisits(self):
        t = on_equator("a", [(1, 1)] * 5)
        assert novelty_series(t, SPEC).bits == (1, 0, 0, 0, 0)
        t = on_equator("b", [(1, 1), (1, 2), (2, 2), (1, 1)])
        assert novelty_series(t, SPEC).bits == (1, 1, 1, 0)

    def test_ones_count_distinct_cells(self, rng):
        t = random_walk("w", 500, rng, dt=600.0)
        spec = cohort_spec([t], 100.0)
        bits = novelty_series(t, spec).bits
        cells = {(r, c) for r, c in zip(*np.nonzero(entropy_heat(t, spec)))}
        assert sum(bits) == len(cells)

    def test_lz_examples(self):
        assert lz_match_lengths([1]) == [1]
        assert lz_match_lengths([1, 0, 0, 0]) == [1, 1, 2, 2]
        assert lz_match_lengths([0, 0, 0, 0]) == [1, 2, 3, 2]
        n = 4
        assert actual_entropy([1, 0, 0, 0]) == pytest.approx(math.log(n) / (6 / 4))

    def test_lz_vs_bruteforce(self, rng):
        for n in (2, 5, 17, 40):
            bits = rng.integers(0, 2, n).tolist()
            assert lz_match_lengths(bits) == lz_lengths_bruteforce(bits)
            assert actual_entropy(bits) == actual_entropy_bruteforce(bits)

    def test_regular_below_random(self, rng):
        regular = [1] + [0] * 199
        assert actual_entropy(regular) < actual_entropy(rng.integers(0, 2, 200).tolist())

    def test_short_series(self):
        assert actual_entropy([1]) == 0.0
        with pytest.raises(InputError):
            actual_entropy([])


class TestProfiles:
    def test_stationary_all_zero(self):
        s = stationary("s", 30)
        spec = cohort_spec([s], 100.0)
        p = entropy_profile(s, spec)
        assert (p.se, p.le, p.he, p.ae) == (0.0, 0.0, 0.0, 0.0)

    def test_moving_user_positive(self, rng):
        t = random_walk("w", 600, rng, dt=600.0)
        p = entropy_profile(t, cohort_spec([t], 100.0))
        assert all(p.get(k) > 0 for k in KINDS)

    def test_similarity_example(self):
        ps = [EntropyProfile(u, se, 0.0, 0.0, 0.0) for u, se in [("a", 1.0), ("b", 2.0), ("c", 3.0)]]
        sim = entropy_similarity(ps, "SE")
        np.testing.assert_allclose(sim, [[1, .5, 0], [.5, 1, .5], [0, .5, 1]])
        assert np.array_equal(entropy_similarity(ps, "LE"), np.ones((3, 3)))

    def test_eots_is_min(self, rng):
        ps = [EntropyProfile(f"u{i}", *rng.uniform(0, 3, 4)) for i in range(6)]
        eots = entropy_similarity(ps, EOTS)
        for k in KINDS:
            assert np.all(eots <= entropy_similarity(ps, k))

    def test_similarity_errors(self):
        ps = [EntropyProfile("a", 1, 1, None, 1), EntropyProfile("b", 1, 1, 1, 1)]
        with pytest.raises(InputError):
            entropy_similarity(ps, "HE")
        with pytest.raises(InputError):
            entropy_similarity(ps, "XX")
        with pytest.raises(InputError):
            entropy_similarity(ps[:1], "SE")

    def test_csv_roundtrip(self, tmp_path):
        ps = [EntropyProfile("a", 0.1, 0.2, None, 0.4), EntropyProfile("b", 1 / 3, 2.0, 0.5, 0.0)]
        write_profiles_csv(ps, tmp_path / "e.csv")
        assert read_profiles_csv(tmp_path / "e.csv") == ps

    def test_params_forwarded(self, rng):
        t = random_walk("w", 400, rng, dt=600.0)
        spec = cohort_spec([t], 100.0)
        a = entropy_profile(t, spec, EntropyParams(he_log_scale=False))
        b = entropy_profile(t, spec)
        assert a.se == b.se and a.he != b.he
