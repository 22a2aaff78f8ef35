"""
Step-two stratified Lie algebras given by structure constants.

The algebra is g = V1 (+) V2 with declared orthonormal bases {X_i} of V1 and {Y_a} of V2;
the tensor c[i, j, a] encodes [X_i, X_j] = sum_a c[i, j, a] Y_a (0-based in code, 1-based in
group spec files). Covectors and group points are both stored in these coordinates: covectors
via the identification g ~ g* given by the scalar product, group points in exponential
coordinates with the law a*b = a + b + [a, b]/2.

Group spec file (JSON):
  {"name": "heisenberg", "v1_dim": 2, "v2_dim": 1,
   "brackets": [{"i": 1, "j": 2, "coeffs": [1.0]}]}

An optional "v1_blocks" entry (lists of 1-based V1 indices) groups coordinates for the
zero-pattern strata used when sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, InternalError

logger = logging.getLogger(__name__)

STRUCTURE_TOL = 1e-12


def as_vector(value: Any, size: int, what: str) -> np.ndarray:
    """Coerce to a finite float vector of the given length or raise InputError."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0 and size == 1:
        arr = arr.reshape(1)
    if arr.shape != (size,):
        raise InputError(f"{what} must have length {size}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} has non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Covector:
    """A point (xi, mu) of V1 (+) V2, identified with g* through the scalar product."""

    xi: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if xi.ndim != 1 or mu.ndim != 1:
            raise InputError("covector components must be vectors")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(mu))):
            raise InputError("covector has non-finite entries")
        object.__setattr__(self, "xi", _frozen(xi))
        object.__setattr__(self, "mu", _frozen(mu))

    @classmethod
    def from_vector(cls, v: Sequence[float], q1: int) -> "Covector":
        v = np.asarray(v, dtype=float)
        return cls(xi=v[:q1], mu=v[q1:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xi, self.mu])

    def scaled(self, s: float) -> "Covector":
        return Covector(xi=s * self.xi, mu=s * self.mu)

    def to_dict(self) -> dict[str, list[float]]:
        return {"xi": self.xi.tolist(), "mu": self.mu.tolist()}


@dataclass(frozen=True, eq=False)
class GroupPoint:
    """A group element (x, u) in exponential coordinates; the identity is (0, 0)."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise InputError("group point has non-finite entries")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "u", _frozen(u))

    @classmethod
    def identity(cls, q1: int, q2: int) -> "GroupPoint":
        return cls(x=np.zeros(q1), u=np.zeros(q2))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.u])

    def to_dict(self) -> dict[str, list[float]]:
        return {"x": self.x.tolist(), "u": self.u.tolist()}


@dataclass(frozen=True, eq=False)
class SkewMap:
    """Matrix of J_mu on V1 in the declared orthonormal basis."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"skew map must be square, got shape {m.shape}")
        scale = float(np.max(np.abs(m))) if m.size else 0.0
        if scale > 0 and np.max(np.abs(m + m.T)) > STRUCTURE_TOL * scale:
            raise InputError("matrix is not skew-symmetric")
        object.__setattr__(self, "m", _frozen(m))

    def __matmul__(self, v: np.ndarray) -> np.ndarray:
        return self.m @ v

    @property
    def norm(self) -> float:
        """Operator 2-norm (largest |eigenvalue| for a skew map)."""
        if not self.m.size:
            return 0.0
        return float(np.linalg.norm(self.m, 2))


@dataclass(frozen=True)
class AlgebraDiagnostics:
    """Outcome of structural validation. `violations` is empty iff the algebra is valid."""

    n: int
    Q: int
    skew_residual: float
    bracket_rank: int
    violations: list[dict[str, Any]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "valid": self.valid,
            "n": self.n,
            "Q": self.Q,
            "skew_residual": self.skew_residual,
            "bracket_rank": self.bracket_rank,
            "violations": self.violations,
        }


@dataclass(frozen=True, eq=False)
class StepTwoAlgebra:
    """
    Structure constants c[i, j, a] of a step-two stratified Lie algebra.

    `v1_blocks` optionally groups V1 coordinates (0-based) into the blocks used to build
    zero-pattern strata when searching for large exponents; None means singletons.
    """

    c: np.ndarray
    name: str = "custom"
    v1_blocks: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[0] < 1 or c.shape[2] < 1:
            raise InputError(f"structure tensor must have shape (q1, q1, q2), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("structure tensor has non-finite entries")
        object.__setattr__(self, "c", _frozen(c))
        if self.v1_blocks is not None:
            blocks = tuple(tuple(int(i) for i in b) for b in self.v1_blocks)
            flat = [i for b in blocks for i in b]
            if any(not b for b in blocks) or len(set(flat)) != len(flat) or any(not 0 <= i < c.shape[0] for i in flat):
                raise InputError(f"v1 blocks must be disjoint non-empty sets of V1 indices, got {self.v1_blocks}")
            object.__setattr__(self, "v1_blocks", blocks)

    @classmethod
    def from_brackets(
        cls,
        q1: int,
        q2: int,
        brackets: Iterable[tuple[int, int, Sequence[float]]],
        name: str = "custom",
        check: bool = True,
        v1_blocks: Sequence[Sequence[int]] | None = None,
    ) -> "StepTwoAlgebra":
        """
        Build from brackets [X_i, X_j] = sum_a coeffs[a] Y_a for i < j (0-based),
        completing the tensor by antisymmetry. Raises InputError on invalid input.
        """
        if q1 < 1 or q2 < 1:
            raise InputError(f"dimensions must be positive, got q1={q1}, q2={q2}")
        c = np.zeros((q1, q1, q2))
        for i, j, coeffs in brackets:
            if not (0 <= i < j < q1):
                raise InputError(f"bracket indices must satisfy 0 <= i < j < {q1}, got ({i}, {j})")
            coeffs = as_vector(coeffs, q2, f"coefficients of [X_{i + 1}, X_{j + 1}]")
            c[i, j] += coeffs
            c[j, i] -= coeffs
        blocks = None if v1_blocks is None else tuple(tuple(b) for b in v1_blocks)
        alg = cls(c=c, name=name, v1_blocks=blocks)
        if check:
            diag = validate(alg)
            if not diag.valid:
                raise InputError(f"invalid step-two algebra '{name}': {diag.violations}")
        return alg

    @classmethod
    def from_spec(cls, spec: Mapping[str, Any]) -> "StepTwoAlgebra":
        """Build from a parsed group spec (1-based indices, i < j, unlisted pairs zero)."""
        try:
            q1 = int(spec["v1_dim"])
            q2 = int(spec["v2_dim"])
            raw = spec.get("brackets", [])
            brackets = [(int(b["i"]) - 1, int(b["j"]) - 1, b["coeffs"]) for b in raw]
            raw_blocks = spec.get("v1_blocks")
            blocks = None if raw_blocks is None else [[int(i) - 1 for i in b] for b in raw_blocks]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed group spec: {e!r}") from e
        return cls.from_brackets(q1, q2, brackets, name=str(spec.get("name", "custom")), v1_blocks=blocks)

    def to_spec(self) -> dict[str, Any]:
        """Group spec mapping (1-based indices); inverse of from_spec."""
        brackets = []
        for i in range(self.q1):
            for j in range(i + 1, self.q1):
                if np.any(self.c[i, j] != 0.0):
                    brackets.append({"i": i + 1, "j": j + 1, "coeffs": self.c[i, j].tolist()})
        spec: dict[str, Any] = {"name": self.name, "v1_dim": self.q1, "v2_dim": self.q2, "brackets": brackets}
        if self.v1_blocks is not None:
            spec["v1_blocks"] = [[i + 1 for i in b] for b in self.v1_blocks]
        return spec

    @property
    def q1(self) -> int:
        return int(self.c.shape[0])

    @property
    def q2(self) -> int:
        return int(self.c.shape[2])

    @property
    def n(self) -> int:
        return self.q1 + self.q2

    @property
    def Q(self) -> int:
        return self.q1 + 2 * self.q2

    @cached_property
    def j_tensor(self) -> np.ndarray:
        # J_mu = j_tensor @ mu, i.e. (J_mu)_{ij} = sum_a mu_a c[j, i, a]
        t = np.ascontiguousarray(self.c.transpose(1, 0, 2))
        t.setflags(write=False)
        return t

    @cached_property
    def bracket_norm(self) -> float:
        """Constant C with |[v, w]| <= C |v| |w|: top singular value of the flattened tensor."""
        flat = self.c.reshape(self.q1 * self.q1, self.q2)
        return float(np.linalg.norm(flat, 2))

    def covector(self, xi: Sequence[float], mu: Sequence[float]) -> Covector:
        return Covector(xi=as_vector(xi, self.q1, "xi"), mu=as_vector(mu, self.q2, "mu"))

    def check_covector(self, cov: Covector) -> Covector:
        if cov.xi.shape != (self.q1,) or cov.mu.shape != (self.q2,):
            raise InputError(
                f"covector dimensions ({cov.xi.size}, {cov.mu.size}) do not match algebra ({self.q1}, {self.q2})"
            )
        return cov


def load_group_spec(path: str | Path) -> StepTwoAlgebra:
    p = Path(path)
    try:
        spec = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read group spec {p}: {e}") from e
    if not isinstance(spec, dict):
        raise InputError(f"group spec {p} must be a JSON object")
    return StepTwoAlgebra.from_spec(spec)


def bracket(alg: StepTwoAlgebra, v: Sequence[float], w: Sequence[float]) -> np.ndarray:
    """[v, w] = sum_{i,j} v_i w_j c[i, j, :]."""
    v = as_vector(v, alg.q1, "v")
    w = as_vector(w, alg.q1, "w")
    return np.einsum("i,j,ija->a", v, w, alg.c)


def j_map(alg: StepTwoAlgebra, mu: Sequence[float]) -> SkewMap:
    """J_mu with <J_mu v, w> = <mu, [v, w]>."""
    mu = as_vector(mu, alg.q2, "mu")
    return SkewMap(m=alg.j_tensor @ mu)


def validate(alg: StepTwoAlgebra) -> AlgebraDiagnostics:
    """Check skew-symmetry and bracket generation; never raises on a structural failure."""
    c = alg.c
    q1, q2 = alg.q1, alg.q2
    violations: list[dict[str, Any]] = []

    scale = float(np.max(np.abs(c))) if c.size else 0.0
    resid = np.abs(c + c.transpose(1, 0, 2))
    skew_residual = float(resid.max()) if resid.size else 0.0
    if skew_residual > STRUCTURE_TOL * max(scale, 1e-300):
        i, j, a = np.unravel_index(int(np.argmax(resid)), resid.shape)
        violations.append({
            "invariant": "skew-symmetry",
            "witness": [int(i) + 1, int(j) + 1, int(a) + 1],
            "residual": skew_residual,
        })

    iu, ju = np.triu_indices(q1, k=1)
    columns = c[iu, ju, :].T  # q2 x q1(q1-1)/2
    if columns.size:
        s = np.linalg.svd(columns, compute_uv=False)
        rank = int(np.sum(s > STRUCTURE_TOL * max(float(s[0]), 1e-300))) if s[0] > 0 else 0
    else:
        rank = 0
    if rank < q2:
        violations.append({
            "invariant": "bracket-generating",
            "rank": rank,
            "required": q2,
        })

    if violations:
        logger.debug("algebra %s failed validation: %s", alg.name, violations)
    return AlgebraDiagnostics(n=alg.n, Q=alg.Q, skew_residual=skew_residual, bracket_rank=rank, violations=violations)


def adjoint(
    alg: StepTwoAlgebra,
    g: GroupPoint,
    v: tuple[Sequence[float], Sequence[float]],
) -> tuple[np.ndarray, np.ndarray]:
    """Ad_g(v1 + v2) = v1 + v2 + [x, v1] for g = (x, u)."""
    x = as_vector(g.x, alg.q1, "g.x")
    as_vector(g.u, alg.q2, "g.u")
    v1 = as_vector(v[0], alg.q1, "v1")
    v2 = as_vector(v[1], alg.q2, "v2")
    return v1.copy(), v2 + np.einsum("i,j,ija->a", x, v1, alg.c)


def adjoint_matrix(alg: StepTwoAlgebra, g: GroupPoint) -> np.ndarray:
    """Ad_g as an n x n matrix acting on stacked (v1, v2)."""
    x = as_vector(g.x, alg.q1, "g.x")
    m = np.eye(alg.n)
    m[alg.q1:, :alg.q1] = np.einsum("i,ija->aj", x, alg.c)
    return m


def group_product(alg: StepTwoAlgebra, a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """a * b = a + b + [a, b]/2 in exponential coordinates."""
    ax = as_vector(a.x, alg.q1, "a.x")
    bx = as_vector(b.x, alg.q1, "b.x")
    au = as_vector(a.u, alg.q2, "a.u")
    bu = as_vector(b.u, alg.q2, "b.u")
    return GroupPoint(x=ax + bx, u=au + bu + 0.5 * np.einsum("i,j,ija->a", ax, bx, alg.c))


def group_inverse(g: GroupPoint) -> GroupPoint:
    return GroupPoint(x=-g.x, u=-g.u)


def hs_metric(alg: StepTwoAlgebra) -> np.ndarray:
    """
    Gram matrix on V2 of the Hilbert-Schmidt normalisation <v, w> = <J_v, J_w>_HS.

    H*_{ab} = trace(J_{Y_a} J_{Y_b}^T) is the induced product on V2*; its inverse is the Gram
    matrix on V2 in the declared coordinates. Offered as an alternative normalisation only.
    """
    jt = alg.j_tensor  # (q1, q1, q2)
    h_star = np.einsum("ija,ijb->ab", jt, jt)
    try:
        np.linalg.cholesky(h_star)
    except np.linalg.LinAlgError as e:
        raise InternalError(f"HS Gram matrix of '{alg.name}' is singular; is the algebra bracket-generating?") from e
    gram = np.linalg.inv(h_star)
    return 0.5 * (gram + gram.T)
