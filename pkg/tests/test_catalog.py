import json

import numpy as np
import pytest

from carnot.algebra import Covector
from carnot.catalog import (
    GAMatrix,
    cauchy_binet_check,
    f1,
    f1_monotone_check,
    f2,
    free,
    free_w_dims,
    from_ga,
    ga_dsexp,
    ga_in_domain,
    ga_jacobian,
    ga_matrix_of,
    heisenberg,
    known_exponents,
    resolve,
    star,
)
from carnot.errors import InputError
from carnot.expmap import jacobian

HEIS_A = GAMatrix(entries=[[1.0]])


def test_small_groups_are_heisenberg():
    c = heisenberg().c
    np.testing.assert_array_equal(free(2).c, c)
    np.testing.assert_array_equal(star(1).c, c)
    np.testing.assert_array_equal(from_ga(HEIS_A).c, c)


def test_builtin_dimensions():
    assert (free(4).q1, free(4).q2) == (4, 6)
    assert (star(3).q1, star(3).q2) == (4, 3)
    assert star(3).v1_blocks == ((0,), (1, 2, 3))
    with pytest.raises(InputError):
        free(1)
    with pytest.raises(InputError):
        star(0)


def test_ga_matrix_validation():
    with pytest.raises(InputError):
        GAMatrix(entries=[[1.0], [2.0]])
    with pytest.raises(InputError):
        GAMatrix(entries=[[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(InputError):
        GAMatrix(entries=[[np.nan, 1.0]])


def test_ga_matrix_recovered_from_algebra():
    A = GAMatrix(entries=[[1.0, 0.5, 0.0], [0.0, 1.0, -0.7]])
    np.testing.assert_array_equal(ga_matrix_of(from_ga(A)).entries, A.entries)
    assert ga_matrix_of(star(2)) is None


def test_ga_matrix_json(tmp_path):
    path = tmp_path / "a.json"
    path.write_text(json.dumps({"A": [[1.0, 2.0]]}))
    assert GAMatrix.from_json(path).to_json() == [[1.0, 2.0]]
    with pytest.raises(InputError):
        GAMatrix.from_json(tmp_path / "missing.json")


def test_f1_f2_values():
    assert f1(0.0) == pytest.approx(1.0 / 3.0)
    assert f2(0.0) == 1.0
    assert f1(np.pi) == pytest.approx(1.0 / np.pi**2, rel=1e-12)
    assert abs(f2(np.pi)) < 1e-15
    s = np.array([0.0, 5e-3, 2e-2, 1.0])
    np.testing.assert_allclose(f2(s), np.sinc(s / np.pi), rtol=1e-14)
    assert f1(s).shape == (4,)


def test_f1_continuous_across_switch():
    assert f1(0.0099999) == pytest.approx(f1(0.0100001), rel=1e-10)
    assert f2(0.0099999) == pytest.approx(f2(0.0100001), rel=1e-10)


def test_monotone_check_passes():
    check = f1_monotone_check()
    assert check.passed


def test_cauchy_binet(rng):
    for m, k in [(1, 1), (1, 3), (2, 3), (3, 3), (2, 4)]:
        A = rng.standard_normal((m, k))
        B = rng.standard_normal((k, m))
        assert cauchy_binet_check(A, B) < 1e-12
    with pytest.raises(InputError):
        cauchy_binet_check(np.ones((2, 3)), np.ones((2, 3)))


def test_heisenberg_closed_form_jacobian():
    assert ga_jacobian(HEIS_A, Covector(xi=[1.0, 0.0], mu=[0.0])) == pytest.approx(1.0 / 12.0)
    assert abs(ga_jacobian(HEIS_A, Covector(xi=[1.0, 0.0], mu=[2.0 * np.pi]))) < 1e-15


@pytest.mark.parametrize("shape", [(1, 2), (2, 2), (2, 3), (3, 3)])
def test_closed_form_jacobian_is_the_determinant(shape, rng):
    A = GAMatrix(entries=rng.standard_normal(shape))
    alg = from_ga(A)
    for _ in range(4):
        xi = rng.standard_normal(2 * A.k)
        mu = rng.standard_normal(A.m)
        mu *= 0.5 / np.max(np.abs(A.entries.T @ mu))
        cov = Covector(xi=xi, mu=mu)
        jac = ga_jacobian(A, cov)
        assert jac == pytest.approx(np.linalg.det(ga_dsexp(A, cov)), rel=1e-9)
        assert jac == pytest.approx(jacobian(alg, cov), rel=1e-8)


def test_ga_domain_proxy():
    assert ga_in_domain(HEIS_A, Covector(xi=[1.0, 0.0], mu=[0.0]))
    assert ga_in_domain(HEIS_A, Covector(xi=[1.0, 0.0], mu=[3.0]))
    assert not ga_in_domain(HEIS_A, Covector(xi=[1.0, 0.0], mu=[2.0 * np.pi]))
    assert not ga_in_domain(HEIS_A, Covector(xi=[0.0, 0.0], mu=[1.0]))
    with pytest.raises(InputError):
        ga_in_domain(HEIS_A, Covector(xi=[1.0, 0.0], mu=[1.0]), grid=4)


def test_free_w_dims():
    assert free_w_dims(4) == [3, 2, 1]
    assert free_w_dims(2) == [1]


@pytest.mark.parametrize(
    "name,k,n,Q,gamma,gamma_hat,n_geo",
    [
        ("free", 3, 6, 9, 2, 2, 14),
        ("free", 4, 10, 16, 8, 8, 30),
        ("star", 2, 5, 7, 0, 2, 9),
        ("star", 3, 7, 10, 0, 4, 13),
    ],
)
def test_known_exponents(name, k, n, Q, gamma, gamma_hat, n_geo):
    report = known_exponents(name, k=k)
    assert (report.n, report.Q, report.gamma_group, report.gamma_hat_lower) == (n, Q, gamma, gamma_hat)
    assert report.n_geo == n_geo
    assert report.chain_holds()


def test_known_exponents_heisenberg_and_ga():
    heis = known_exponents("heisenberg")
    assert heis.n_geo == heis.n_ce_lower == 5
    assert known_exponents("star", k=2).n_ce_lower == 11
    assert known_exponents("star", k=3).n_ce_lower == 17
    ga = known_exponents("ga", A=GAMatrix(entries=np.eye(2)))
    assert ga.n_geo == 10 and ga.ce_exact
    with pytest.raises(InputError):
        known_exponents("ga")
    with pytest.raises(InputError):
        known_exponents("tree", k=3)


def test_resolve_descriptors(tmp_path):
    res = resolve("star:3")
    assert (res.family, res.k, res.algebra.n) == ("star", 3, 7)
    assert res.known().gamma_hat_lower == 4
    path = tmp_path / "a.json"
    path.write_text(json.dumps([[1.0, 0.0, 2.0]]))
    ga = resolve(f"ga:{path}")
    assert ga.family == "ga" and ga.algebra.n == 7
    spec = tmp_path / "g.json"
    spec.write_text(json.dumps(heisenberg().to_spec()))
    custom = resolve(str(spec))
    assert custom.family is None and custom.known() is None


@pytest.mark.parametrize("bad", ["free:x", "free:1", "star:", "ga:/no/such/file.json", "/no/such/group.json"])
def test_resolve_rejects(bad):
    with pytest.raises(InputError):
        resolve(bad)
