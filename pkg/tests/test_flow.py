import numpy as np
import pytest

from carnot.algebra import Covector, GroupPoint
from carnot.errors import InputError
from carnot.expmap import sexp
from carnot.flow import (
    EndpointComparison,
    check_conservation,
    check_left_translation,
    check_speed_symmetry,
    convergence_order,
    integrate,
    trajectory_frame,
    with_frequency,
)

from conftest import unit_covectors


def test_heisenberg_endpoint_matches_sexp(heis):
    cov = heis.covector([1.0, 0.0], [1.0])
    traj = integrate(heis, cov)
    assert traj.steps == 1000
    assert traj.step == pytest.approx(1e-3)
    assert EndpointComparison(traj.endpoint(), sexp(heis, cov)).error < 1e-8


def test_endpoint_matches_sexp(group, rng):
    for cov in unit_covectors(group, rng, 3, radius=1.5):
        traj = integrate(group, cov)
        assert EndpointComparison(traj.endpoint(), sexp(group, cov)).error < 1e-8


def test_conservation(group, rng):
    for cov in unit_covectors(group, rng, 3, radius=1.5):
        report = check_conservation(group, integrate(group, cov))
        assert report.max_drift() < 1e-8
        assert report.mu_drift == 0.0


def test_speed_symmetry(group, rng):
    cov = unit_covectors(group, rng, 1)[0]
    assert check_speed_symmetry(group, cov, 0.5).error < 1e-9
    with pytest.raises(InputError):
        check_speed_symmetry(group, cov, 1.5)


def test_left_translation(group, rng):
    cov = unit_covectors(group, rng, 1)[0]
    p = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
    assert check_left_translation(group, cov, p, t_end=0.5) < 1e-10


def test_grid_lands_on_t_end(heis):
    traj = integrate(heis, heis.covector([1.0, 0.0], [1.0]), t_end=0.7, h=0.3)
    assert traj.steps == 2
    assert traj.times[-1] == 0.7


def test_rejects_non_positive_times(heis):
    cov = heis.covector([1.0, 0.0], [1.0])
    with pytest.raises(InputError):
        integrate(heis, cov, t_end=0.0)
    with pytest.raises(InputError):
        integrate(heis, cov, h=-1e-3)


def test_trajectory_frame_columns(heis):
    traj = integrate(heis, heis.covector([1.0, 0.0], [1.0]), t_end=0.01, h=1e-3)
    df = trajectory_frame(traj)
    assert list(df.columns) == ["t", "x1", "x2", "u1", "xi1", "xi2", "mu1"]
    assert len(df) == 11
    np.testing.assert_allclose(df["mu1"], 1.0)


def test_rk4_order(group, rng):
    cov = with_frequency(group, unit_covectors(group, rng, 1)[0])
    report = convergence_order(group, cov, sexp(group, cov))
    assert report.steps == (1e-2, 5e-3, 2.5e-3)
    assert all(r >= 12.0 for r in report.ratios), report.to_dict()


def test_with_frequency(heis):
    cov = with_frequency(heis, heis.covector([3.0, 4.0], [0.5]))
    np.testing.assert_allclose(cov.xi, [0.6, 0.8])
    assert np.linalg.norm(heis.j_tensor @ cov.mu, 2) == pytest.approx(4.0)
    with pytest.raises(InputError):
        with_frequency(heis, heis.covector([1.0, 0.0], [0.0]))


def test_zero_mu_is_a_straight_line(group, rng):
    xi = rng.standard_normal(group.q1)
    traj = integrate(group, Covector(xi=xi, mu=np.zeros(group.q2)), t_end=1.0, h=1e-2)
    np.testing.assert_allclose(traj.x, traj.times[:, None] * xi, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(traj.u, 0.0, atol=1e-12)
    report = check_conservation(group, traj)
    assert report.energy_drift == 0.0
    assert report.mu_drift == 0.0
    assert report.ad_drift == 0.0


@pytest.mark.slow
def test_endpoint_and_drifts_on_many_covectors(group, rng):
    for cov in unit_covectors(group, rng, 50):
        traj = integrate(group, cov)
        assert EndpointComparison(traj.endpoint(), sexp(group, cov)).error < 1e-8
        assert check_conservation(group, traj).max_drift() < 1e-8
