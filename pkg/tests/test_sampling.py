import numpy as np

from carnot.catalog import free, heisenberg, star
from carnot.sampling import (
    Stratum,
    chunk_sizes,
    default_strata,
    gaussian_covectors,
    map_chunks,
    spawn_generators,
)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    assert chunk_sizes(0, 4) == []


def test_star_strata_follow_blocks():
    labels = [s.label for s in default_strata(star(2))]
    assert labels == ["full", "xi0=1", "xi0=2,3"]


def test_singleton_strata_exclude_all_zero():
    strata = default_strata(free(3))
    assert len(strata) == 1 + 6
    assert all(len(s.xi_zero) < 3 for s in strata)


def test_stratum_apply_and_round_trip():
    s = Stratum(xi_zero=(0,), mu_zero=(1,))
    xi, mu = np.ones((2, 3)), np.ones((2, 2))
    zx, zm = s.apply(xi, mu)
    np.testing.assert_array_equal(zx[:, 0], 0.0)
    np.testing.assert_array_equal(zm[:, 1], 0.0)
    sx, _ = s.apply(xi, mu, factor=1e-2)
    np.testing.assert_array_equal(sx[:, 0], 1e-2)
    np.testing.assert_array_equal(xi, 1.0)
    assert Stratum.from_dict(s.to_dict()) == s


def test_gaussian_covectors_are_seeded():
    alg = heisenberg()
    a = gaussian_covectors(spawn_generators(7, 1)[0], alg, 5)
    b = gaussian_covectors(spawn_generators(7, 1)[0], alg, 5)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert a[0].shape == (5, 2) and a[1].shape == (5, 1)


def test_map_chunks_independent_of_workers():
    def draw(i, rng, size):
        return (i, rng.standard_normal(size))

    serial = map_chunks(draw, [3, 3, 2, 5], seed=(1, 2), workers=1)
    threaded = map_chunks(draw, [3, 3, 2, 5], seed=(1, 2), workers=3)
    assert [i for i, _ in serial] == [0, 1, 2, 3]
    for (i, a), (j, b) in zip(serial, threaded):
        assert i == j
        np.testing.assert_array_equal(a, b)
