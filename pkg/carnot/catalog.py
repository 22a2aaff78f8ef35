"""
Builtin step-two groups and their closed forms.

  heisenberg   [X1, X2] = Y
  free:k       [X_i, X_j] = Y_ij (i < j, lexicographic)
  star:k       [X0, Xj] = Yj
  ga:<file>    [X_{2j-1}, X_{2j}] = sum_i A_ij Y_i for a full-rank m x k matrix A (m <= k)

For G_A everything is explicit: SExp, its differential, the Jacobian as a Cauchy-Binet sum
over m-subsets of columns, and the box |mu . A_j| < 2 pi containing the regular domain.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from .algebra import Covector, GroupPoint, StepTwoAlgebra, as_vector
from .errors import InputError
from .gamma import INFINITE, ExponentReport, Order

logger = logging.getLogger(__name__)

TAYLOR_RADIUS = 1e-2
_INNER_RADIUS = 1e-1
DOMAIN_GRID = 32


# --- builtins ---------------------------------------------------------------------------------


def heisenberg() -> StepTwoAlgebra:
    return StepTwoAlgebra.from_brackets(2, 1, [(0, 1, [1.0])], name="heisenberg")


def free_pairs(k: int) -> list[tuple[int, int]]:
    """V2 basis labels (i, j), i < j, in lexicographic order (0-based)."""
    return list(itertools.combinations(range(k), 2))


def free(k: int) -> StepTwoAlgebra:
    if k < 2:
        raise InputError(f"free step-two group needs k >= 2, got {k}")
    pairs = free_pairs(k)
    eye = np.eye(len(pairs))
    return StepTwoAlgebra.from_brackets(k, len(pairs), [(i, j, eye[p]) for p, (i, j) in enumerate(pairs)], name=f"free:{k}")


def star(k: int) -> StepTwoAlgebra:
    if k < 1:
        raise InputError(f"star graph group needs k >= 1, got {k}")
    eye = np.eye(k)
    return StepTwoAlgebra.from_brackets(
        k + 1,
        k,
        [(0, j, eye[j - 1]) for j in range(1, k + 1)],
        name=f"star:{k}",
        v1_blocks=[(0,), tuple(range(1, k + 1))],
    )


@dataclass(frozen=True, eq=False)
class GAMatrix:
    """Full-rank m x k matrix with m <= k; column j couples the pair (X_{2j-1}, X_{2j})."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if a.ndim != 2 or a.shape[0] > a.shape[1] or a.shape[0] < 1:
            raise InputError(f"A must be m x k with 1 <= m <= k, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("A has non-finite entries")
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise InputError(f"A must have full rank {a.shape[0]}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return int(self.entries.shape[0])

    @property
    def k(self) -> int:
        return int(self.entries.shape[1])

    @classmethod
    def from_json(cls, path: str | Path) -> "GAMatrix":
        p = Path(path)
        try:
            rows = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read A matrix {p}: {e}") from e
        if isinstance(rows, dict):
            rows = rows.get("A")
        return cls(entries=np.array(rows, dtype=float))

    def to_json(self) -> list[list[float]]:
        return self.entries.tolist()


def ga_matrix_of(alg: StepTwoAlgebra) -> GAMatrix | None:
    """Recover A from an algebra built by from_ga, else None."""
    if not alg.name.startswith("ga:") or alg.q1 % 2:
        return None
    return GAMatrix(entries=np.array([alg.c[2 * j, 2 * j + 1] for j in range(alg.q1 // 2)]).T)


def from_ga(A: GAMatrix) -> StepTwoAlgebra:
    a = A.entries
    return StepTwoAlgebra.from_brackets(
        2 * A.k,
        A.m,
        [(2 * j, 2 * j + 1, a[:, j]) for j in range(A.k)],
        name=f"ga:{A.m}x{A.k}",
        v1_blocks=[(2 * j, 2 * j + 1) for j in range(A.k)],
    )


# --- scalar closed forms ----------------------------------------------------------------------


def _coeffs(fn: Callable[[int], float], terms: Iterable[int]) -> np.ndarray:
    return np.array([fn(n) for n in terms])


# Taylor coefficients in s^2 of the removable singularities
_F1 = _coeffs(lambda n: (-1) ** (n + 1) * 2 * n / math.factorial(2 * n + 1), range(1, 6))
_F2 = _coeffs(lambda n: (-1) ** n / math.factorial(2 * n + 1), range(0, 5))
_G = _coeffs(lambda n: (-1) ** (n + 1) / math.factorial(2 * n + 1), range(1, 7))
_J22 = _coeffs(lambda n: (-1) ** n * (1 - 2 * n) / math.factorial(2 * n + 1), range(1, 7))


def _switch(s: Any, radius: float, coeffs: np.ndarray, direct: Callable[[np.ndarray], np.ndarray]) -> Any:
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < radius
    safe = np.where(small, 1.0, s)
    series = np.polynomial.polynomial.polyval(s * s, coeffs)
    out = np.where(small, series, direct(safe))
    return float(out) if out.ndim == 0 else out


def f1(s: Any) -> Any:
    """(sin s - s cos s) / s^3, with f1(0) = 1/3."""
    return _switch(s, TAYLOR_RADIUS, _F1, lambda t: (np.sin(t) - t * np.cos(t)) / t**3)


def f2(s: Any) -> Any:
    """sin s / s, with f2(0) = 1."""
    return _switch(s, TAYLOR_RADIUS, _F2, lambda t: np.sin(t) / t)


def _g(s: Any) -> Any:
    # (s - sin s) / s^3
    return _switch(s, _INNER_RADIUS, _G, lambda t: (t - np.sin(t)) / t**3)


def _j22(s: Any) -> Any:
    # (2 sin s - s - s cos s) / s^3
    return _switch(s, _INNER_RADIUS, _J22, lambda t: (2 * np.sin(t) - t - t * np.cos(t)) / t**3)


def _rotation_parts(nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """sin(nu)/nu and (1 - cos nu)/nu."""
    return f2(nu), 0.5 * nu * f2(0.5 * nu) ** 2


# --- G_A closed forms -------------------------------------------------------------------------


def _ga_args(A: GAMatrix, cov: Covector) -> tuple[np.ndarray, np.ndarray]:
    xi = as_vector(cov.xi, 2 * A.k, "xi")
    mu = as_vector(cov.mu, A.m, "mu")
    return xi.reshape(A.k, 2), A.entries.T @ mu


def ga_sexp(A: GAMatrix, cov: Covector) -> GroupPoint:
    """x_j = E1(xi_pair_j, mu . A_j), u = A (E2(xi_pair_j, mu . A_j))_j."""
    v, nu = _ga_args(A, cov)
    s, c = _rotation_parts(nu)
    x = np.column_stack([s * v[:, 0] - c * v[:, 1], c * v[:, 0] + s * v[:, 1]]).reshape(-1)
    e2 = 0.5 * nu * _g(nu) * np.sum(v * v, axis=1)
    return GroupPoint(x=x, u=A.entries @ e2)


def ga_dsexp(A: GAMatrix, cov: Covector) -> np.ndarray:
    """Differential of ga_sexp as a (2k+m) square matrix in the (xi, mu) -> (x, u) layout."""
    v, nu = _ga_args(A, cov)
    k, m = A.k, A.m
    a = A.entries
    s, c = _rotation_parts(nu)
    d_s = -nu * f1(nu)  # d/dnu sin(nu)/nu
    d_c = f2(nu) - 0.5 * f2(0.5 * nu) ** 2  # d/dnu (1 - cos nu)/nu
    e2 = nu * _g(nu)
    j22 = 0.5 * _j22(nu) * np.sum(v * v, axis=1)

    D = np.zeros((2 * k + m, 2 * k + m))
    for j in range(k):
        rows = slice(2 * j, 2 * j + 2)
        D[rows, rows] = [[s[j], -c[j]], [c[j], s[j]]]
        col = np.array([d_s[j] * v[j, 0] - d_c[j] * v[j, 1], d_c[j] * v[j, 0] + d_s[j] * v[j, 1]])
        D[rows, 2 * k:] = np.outer(col, a[:, j])
        D[2 * k:, rows] = np.outer(a[:, j], e2[j] * v[j])
    D[2 * k:, 2 * k:] = a @ np.diag(j22) @ a.T
    return D


def subset_sum(A: np.ndarray, term: Callable[[tuple[int, ...]], float]) -> float:
    """sum over m-subsets S of the k columns of det(A[:, S]) * term(S)."""
    m, k = A.shape
    total = 0.0
    for S in itertools.combinations(range(k), m):
        minor = float(np.linalg.det(A[:, list(S)]))
        if minor != 0.0:
            total += minor * term(S)
    return total


def cauchy_binet_check(A: np.ndarray, B: np.ndarray) -> float:
    """|det(AB) - sum_S det(A_S) det(B_S)| for A m x k, B k x m."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.shape != (A.shape[1], A.shape[0]) or A.shape[0] > A.shape[1]:
        raise InputError(f"need A (m x k) and B (k x m) with m <= k, got {A.shape} and {B.shape}")
    lhs = float(np.linalg.det(A @ B))
    rhs = subset_sum(A, lambda S: float(np.linalg.det(B[list(S), :])))
    return abs(lhs - rhs)


def ga_jacobian(A: GAMatrix, cov: Covector) -> float:
    """4^-m sum_S det(A_S)^2 prod_{j not in S} f2^2 prod_{j in S} f1 f2 |xi_pair_j|^2, at mu . A_j / 2."""
    v, nu = _ga_args(A, cov)
    half = 0.5 * nu
    a1 = f1(half)
    a2 = f2(half)
    r2 = np.sum(v * v, axis=1)
    off = a2 * a2
    on = a1 * a2 * r2
    a = A.entries

    def term(S: tuple[int, ...]) -> float:
        inside = np.zeros(A.k, dtype=bool)
        inside[list(S)] = True
        return float(np.linalg.det(a[:, list(S)])) * float(np.prod(np.where(inside, on, off)))

    return subset_sum(a, term) / 4.0**A.m


def ga_in_box(A: GAMatrix, cov: Covector) -> bool:
    _, nu = _ga_args(A, cov)
    return bool(np.all(np.abs(nu) < 2.0 * np.pi))


def ga_in_domain(A: GAMatrix, cov: Covector, grid: int = DOMAIN_GRID) -> bool:
    """
    Necessary condition for membership in the regular domain: the box |mu . A_j| < 2 pi and a
    positive closed-form Jacobian along (xi, t mu) for t on a uniform grid of (0, 1].
    A proxy, sound only for exclusion.
    """
    if grid < 8:
        raise InputError(f"domain grid needs at least 8 points, got {grid}")
    if not ga_in_box(A, cov):
        return False
    for t in np.arange(1, grid + 1) / grid:
        if ga_jacobian(A, Covector(xi=cov.xi, mu=t * cov.mu)) <= 0.0:
            return False
    return True


@dataclass(frozen=True)
class MonotoneCheck:
    """Smallest slack of f(lam s) - f(s) over the grid; both >= 0 means monotone on [-pi, pi]."""

    f1_slack: float
    f2_slack: float

    @property
    def passed(self) -> bool:
        return self.f1_slack >= -1e-15 and self.f2_slack >= -1e-15


def f1_monotone_check(grid: int = 201) -> MonotoneCheck:
    """Numerically check f(lam s) >= f(s) for f in {f1, f2}, s in [-pi, pi], lam in [0, 1]."""
    s = np.linspace(-np.pi, np.pi, grid)
    lam = np.linspace(0.0, 1.0, grid)
    S, L = np.meshgrid(s, lam)
    return MonotoneCheck(
        f1_slack=float(np.min(f1(L * S) - f1(S))),
        f2_slack=float(np.min(f2(L * S) - f2(S))),
    )


# --- closed-form exponents --------------------------------------------------------------------


def free_w_dims(k: int) -> list[int]:
    """Generic filtration of free:k: dim W_l = k - l - 1 for 0 <= l <= k - 2."""
    return [k - ell - 1 for ell in range(k - 1)]


def star_gamma_case(k: int, cov: Covector) -> Order:
    """Order at cov on star:k: 0 if xi0 != 0; else 2k-2 if mu . xi_hat != 0; else infinite."""
    xi = as_vector(cov.xi, k + 1, "xi")
    mu = as_vector(cov.mu, k, "mu")
    if xi[0] != 0.0:
        return 0
    if k == 1:
        return 0 if xi[1] != 0.0 else INFINITE
    return 2 * k - 2 if float(mu @ xi[1:]) != 0.0 else INFINITE


def known_exponents(name: str, k: int | None = None, A: GAMatrix | None = None) -> ExponentReport:
    """Exact exponents of the builtin families."""
    if name == "heisenberg":
        return ExponentReport(name="heisenberg", n=3, Q=4, gamma_group=0, gamma_hat_lower=0, source="closed-form", ce_exact=True)
    if name == "free":
        if k is None or k < 2:
            raise InputError("free needs k >= 2")
        gamma = sum(2 * ell * dim for ell, dim in enumerate(free_w_dims(k)))
        # every W_inf-free covector has the generic filtration, so the finite orders coincide
        return ExponentReport(
            name=f"free:{k}", n=k + k * (k - 1) // 2, Q=k + k * (k - 1), gamma_group=gamma, gamma_hat_lower=gamma,
            source="closed-form",
        )
    if name == "star":
        if k is None or k < 1:
            raise InputError("star needs k >= 1")
        return ExponentReport(
            name=f"star:{k}", n=2 * k + 1, Q=3 * k + 1, gamma_group=0, gamma_hat_lower=max(2 * k - 2, 0),
            source="closed-form",
        )
    if name == "ga":
        if A is None:
            raise InputError("ga needs its A matrix")
        return ExponentReport(
            name=f"ga:{A.m}x{A.k}", n=2 * A.k + A.m, Q=2 * A.k + 2 * A.m, gamma_group=0, gamma_hat_lower=0,
            source="closed-form", ce_exact=True,
        )
    raise InputError(f"unknown builtin '{name}' (expected heisenberg, free, star or ga)")


# --- descriptors ------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResolvedGroup:
    descriptor: str
    algebra: StepTwoAlgebra
    family: str | None = None
    k: int | None = None
    ga: GAMatrix | None = None

    def known(self) -> ExponentReport | None:
        if self.family is None:
            return None
        return known_exponents(self.family, k=self.k, A=self.ga)


def _parse_k(descriptor: str, family: str) -> int:
    try:
        return int(descriptor.split(":", 1)[1])
    except (IndexError, ValueError) as e:
        raise InputError(f"'{descriptor}' is not of the form {family}:<k>") from e


def resolve(descriptor: str) -> ResolvedGroup:
    """Parse heisenberg | free:k | star:k | ga:<file> | <group spec json>."""
    d = descriptor.strip()
    if d == "heisenberg":
        return ResolvedGroup(d, heisenberg(), family="heisenberg")
    if d.startswith("free:"):
        k = _parse_k(d, "free")
        return ResolvedGroup(d, free(k), family="free", k=k)
    if d.startswith("star:"):
        k = _parse_k(d, "star")
        return ResolvedGroup(d, star(k), family="star", k=k)
    if d.startswith("ga:"):
        A = GAMatrix.from_json(d[3:])
        return ResolvedGroup(d, from_ga(A), family="ga", ga=A)
    from .algebra import load_group_spec

    return ResolvedGroup(d, load_group_spec(d))


def resolve_group(descriptor: str) -> StepTwoAlgebra:
    return resolve(descriptor).algebra
