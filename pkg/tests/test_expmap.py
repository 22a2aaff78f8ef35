import numpy as np
import pytest

from carnot.algebra import Covector
from carnot.catalog import GAMatrix, ga_dsexp, ga_sexp
from carnot.config import SeriesConfig
from carnot.errors import ConvergenceError, InputError
from carnot.expmap import (
    bk,
    dilate,
    dsexp,
    dsexp_batch,
    eta,
    jacobian,
    jacobian_eta_identity,
    jacobian_homogeneity,
    sexp,
    sexp_batch,
    zeta,
)

from conftest import unit_covectors

HEIS_A = GAMatrix(entries=np.array([[1.0]]))


def test_sexp_at_zero_mu_is_linear_plus_zero(group, rng):
    xi = rng.standard_normal(group.q1)
    p = sexp(group, Covector(xi=xi, mu=np.zeros(group.q2)))
    np.testing.assert_allclose(p.x, xi, atol=1e-15)
    np.testing.assert_allclose(p.u, 0.0, atol=1e-15)


def test_sexp_identity_at_zero(group):
    p = sexp(group, Covector(xi=np.zeros(group.q1), mu=np.ones(group.q2)))
    np.testing.assert_allclose(p.as_vector(), 0.0, atol=1e-15)


def test_heisenberg_half_turn(heis):
    p = sexp(heis, heis.covector([1.0, 0.0], [np.pi]))
    np.testing.assert_allclose(p.x, [0.0, 2.0 / np.pi], atol=1e-14)
    np.testing.assert_allclose(p.u, [1.0 / (2.0 * np.pi)], rtol=1e-13)


@pytest.mark.parametrize("mu", [0.0, 1e-4, 0.3, 1.0, 3.0, 6.0])
def test_heisenberg_matches_closed_form(heis, mu):
    cov = heis.covector([0.7, -1.2], [mu])
    np.testing.assert_allclose(sexp(heis, cov).as_vector(), ga_sexp(HEIS_A, cov).as_vector(), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(dsexp(heis, cov), ga_dsexp(HEIS_A, cov), rtol=1e-10, atol=1e-12)


def test_heisenberg_jacobian_at_zero_mu(heis):
    assert jacobian(heis, heis.covector([1.0, 0.0], [0.0])) == pytest.approx(1.0 / 12.0, rel=1e-12)


def test_bk_first_term(heis):
    # B_1 = [xi, J xi] / 12 = mu |xi|^2 / 12 on the Heisenberg group
    np.testing.assert_allclose(bk(heis, [2.0], [1.0, 1.0], 1), [4.0 / 12.0])
    np.testing.assert_allclose(bk(heis, [2.0], [1.0, 1.0], 0), [0.0])
    with pytest.raises(InputError):
        bk(heis, [2.0], [1.0, 1.0], -1)


def test_batch_matches_single(group, rng):
    covs = unit_covectors(group, rng, 6, radius=1.5)
    xi = np.array([c.xi for c in covs])
    mu = np.array([c.mu for c in covs])
    x, u = sexp_batch(group, xi, mu)
    D = dsexp_batch(group, xi, mu)
    for i, cov in enumerate(covs):
        p = sexp(group, cov)
        np.testing.assert_allclose(x[i], p.x, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(u[i], p.u, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(D[i], dsexp(group, cov), rtol=1e-12, atol=1e-14)


def test_series_matches_finite_difference(group, rng):
    for cov in unit_covectors(group, rng, 50, radius=2.0):
        D = dsexp(group, cov)
        F = dsexp(group, cov, method="finite-difference")
        np.testing.assert_allclose(D, F, rtol=0, atol=1e-6)


def test_large_mu_uses_enough_terms(heis):
    cov = heis.covector([1.0, 0.5], [10.0])
    np.testing.assert_allclose(sexp(heis, cov).as_vector(), ga_sexp(HEIS_A, cov).as_vector(), rtol=1e-10, atol=1e-12)


def test_term_cap_raises(heis):
    with pytest.raises(ConvergenceError) as exc:
        sexp(heis, heis.covector([1.0, 0.0], [50.0]), SeriesConfig(max_terms=8))
    assert exc.value.terms == 8


def test_unknown_method(heis):
    with pytest.raises(InputError):
        dsexp(heis, heis.covector([1.0, 0.0], [1.0]), method="spectral")


def test_eta_dilation_identity(group, rng):
    for cov in unit_covectors(group, rng, 100):
        lam = rng.uniform(0.1, 2.0)
        lhs = sexp(group, eta(lam, cov)).as_vector()
        rhs = dilate(lam, sexp(group, cov)).as_vector()
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_eta_rejects_zero(heis):
    with pytest.raises(InputError):
        eta(0.0, heis.covector([1.0, 0.0], [1.0]))


def test_zeta_scales_mu_only(heis):
    z = zeta(0.5, heis.covector([1.0, 2.0], [4.0]))
    np.testing.assert_array_equal(z.xi, [1.0, 2.0])
    np.testing.assert_array_equal(z.mu, [2.0])


def test_jacobian_homogeneity(group, rng):
    # free groups vanish to second order in mu, so their determinants carry more cancellation
    tol = 1e-7 if group.name.startswith("free") else 1e-9
    for cov in unit_covectors(group, rng, 100):
        lam = rng.uniform(0.1, 2.0)
        assert jacobian_homogeneity(group, cov, lam).rel_error < tol
        assert jacobian_eta_identity(group, cov, lam).rel_error < tol


def test_jacobian_homogeneity_heisenberg_example(heis):
    check = jacobian_homogeneity(heis, heis.covector([1.0, 0.0], [1.0]), 0.5)
    # Jac(lam cov) = lam^2 Jac(xi, lam mu) on the Heisenberg group
    assert check.rhs == pytest.approx(0.25 * jacobian(heis, heis.covector([1.0, 0.0], [0.5])), rel=1e-14)
    assert check.rel_error < 1e-12


def test_zeta_composes(heis, rng):
    cov = unit_covectors(heis, rng, 1)[0]
    np.testing.assert_allclose(zeta(0.5, zeta(3.0, cov)).mu, zeta(1.5, cov).mu, rtol=1e-15)
    assert zeta(2.0, heis.covector([1.0, 0.0], [3.0])).mu[0] == 6.0
