import json

import numpy as np
import pytest

from carnot.algebra import (
    Covector,
    GroupPoint,
    StepTwoAlgebra,
    adjoint,
    adjoint_matrix,
    bracket,
    group_inverse,
    group_product,
    hs_metric,
    j_map,
    load_group_spec,
    validate,
)
from carnot.errors import InputError, InternalError


def test_heisenberg_dimensions(heis):
    assert (heis.q1, heis.q2, heis.n, heis.Q) == (2, 1, 3, 4)
    np.testing.assert_allclose(bracket(heis, [1, 0], [0, 1]), [1.0])
    np.testing.assert_allclose(bracket(heis, [0, 1], [1, 0]), [-1.0])


def test_j_map_is_the_bracket_pairing(group, rng):
    mu = rng.standard_normal(group.q2)
    v, w = rng.standard_normal(group.q1), rng.standard_normal(group.q1)
    J = j_map(group, mu)
    np.testing.assert_allclose(J.m, -J.m.T, atol=1e-15)
    assert np.dot(J @ v, w) == pytest.approx(np.dot(mu, bracket(group, v, w)), abs=1e-12)


def test_heisenberg_j_map(heis):
    np.testing.assert_allclose(j_map(heis, [2.0]).m, [[0.0, -2.0], [2.0, 0.0]])


def test_validate_accepts_catalog(group):
    diag = validate(group)
    assert diag.valid
    assert diag.bracket_rank == group.q2


def test_validate_reports_non_generating():
    alg = StepTwoAlgebra.from_brackets(3, 2, [(0, 1, [1.0, 0.0]), (0, 2, [2.0, 0.0])], check=False)
    diag = validate(alg)
    assert not diag.valid
    assert diag.bracket_rank == 1
    assert diag.violations[0]["invariant"] == "bracket-generating"


def test_validate_reports_skew_violation():
    c = np.zeros((2, 2, 1))
    c[0, 1, 0] = 1.0
    c[1, 0, 0] = 0.5
    diag = validate(StepTwoAlgebra(c=c))
    assert not diag.valid
    assert diag.violations[0]["invariant"] == "skew-symmetry"
    assert diag.violations[0]["witness"][:2] in ([1, 2], [2, 1])


def test_from_brackets_rejects_bad_input():
    with pytest.raises(InputError):
        StepTwoAlgebra.from_brackets(2, 1, [(1, 0, [1.0])])
    with pytest.raises(InputError):
        StepTwoAlgebra.from_brackets(2, 1, [(0, 1, [1.0, 2.0])])
    with pytest.raises(InputError):
        StepTwoAlgebra.from_brackets(3, 2, [(0, 1, [1.0, 0.0])])


def test_spec_round_trip(group, tmp_path):
    path = tmp_path / "group.json"
    path.write_text(json.dumps(group.to_spec()))
    loaded = load_group_spec(path)
    np.testing.assert_array_equal(loaded.c, group.c)
    assert loaded.v1_blocks == group.v1_blocks
    assert loaded.name == group.name


def test_malformed_spec(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"v1_dim": 2, "brackets": []}))
    with pytest.raises(InputError):
        load_group_spec(path)
    path.write_text("not json")
    with pytest.raises(InputError):
        load_group_spec(path)


def test_covector_dimension_mismatch(heis):
    with pytest.raises(InputError):
        heis.covector([1.0, 0.0, 0.0], [1.0])
    with pytest.raises(InputError):
        heis.check_covector(Covector(xi=[1.0], mu=[1.0]))


def test_group_law(group, rng):
    a = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
    b = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
    e = GroupPoint.identity(group.q1, group.q2)
    np.testing.assert_allclose(group_product(group, a, group_inverse(a)).as_vector(), e.as_vector(), atol=1e-14)
    np.testing.assert_allclose(group_product(group, e, b).as_vector(), b.as_vector())
    c = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
    left = group_product(group, group_product(group, a, b), c)
    right = group_product(group, a, group_product(group, b, c))
    np.testing.assert_allclose(left.as_vector(), right.as_vector(), atol=1e-12)


def test_adjoint_matrix_matches_adjoint(group, rng):
    g = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
    v1, v2 = rng.standard_normal(group.q1), rng.standard_normal(group.q2)
    w1, w2 = adjoint(group, g, (v1, v2))
    np.testing.assert_allclose(adjoint_matrix(group, g) @ np.concatenate([v1, v2]), np.concatenate([w1, w2]))
    ident = adjoint_matrix(group, GroupPoint.identity(group.q1, group.q2))
    np.testing.assert_array_equal(ident, np.eye(group.n))


def test_adjoint_inverse_composition(group, rng):
    for _ in range(100):
        g = GroupPoint(x=rng.standard_normal(group.q1), u=rng.standard_normal(group.q2))
        composed = adjoint_matrix(group, g) @ adjoint_matrix(group, group_inverse(g))
        np.testing.assert_allclose(composed, np.eye(group.n), atol=1e-12)


def test_hs_metric_is_symmetric_positive(group):
    G = hs_metric(group)
    np.testing.assert_allclose(G, G.T, atol=1e-15)
    assert np.linalg.eigvalsh(G).min() > 0


def test_hs_metric_heisenberg(heis):
    np.testing.assert_allclose(hs_metric(heis), [[0.5]])


def test_bracket_norm_heisenberg(heis):
    assert heis.bracket_norm == pytest.approx(np.sqrt(2.0))


def test_hs_metric_ga_single_row():
    from carnot.catalog import GAMatrix, from_ga

    np.testing.assert_allclose(hs_metric(from_ga(GAMatrix(entries=[[1.0, 1.0]]))), [[0.25]])


def test_hs_metric_rejects_non_generating():
    alg = StepTwoAlgebra.from_brackets(3, 2, [(0, 1, [1.0, 0.0])], check=False)
    with pytest.raises(InternalError):
        hs_metric(alg)
