"""
Geodesic filtration of a covector and the exponents built on it.

For (xi, mu), U^l = span{xi, J xi, ..., J^{l-1} xi} (J = J_mu) and U_l = {nu : J_nu(U^l) = 0}.
W_l is the orthogonal complement of U_{l+1} in U_l, W_inf the limit of U_l. The order of
vanishing of Jac(SExp) along zeta_lambda is N = 2 sum_l l dim W_l, infinite when W_inf != 0.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from .algebra import Covector, StepTwoAlgebra
from .config import DEFAULT_SEED
from .errors import DegenerateCovectorError, SamplingError
from .sampling import Stratum, chunk_sizes, default_strata, gaussian_covectors, map_chunks

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10
NEAR_TOL_FACTOR = 1e3


class Infinite(enum.Enum):
    """Marker for an infinite order; deliberately supports no arithmetic."""

    INFINITE = "inf"

    def __str__(self) -> str:
        return "inf"


INFINITE = Infinite.INFINITE

Order = Union[int, Infinite]


def order_to_json(value: Order) -> int | str:
    return "inf" if value is INFINITE else int(value)


def order_from_json(value: int | str) -> Order:
    return INFINITE if value == "inf" else int(value)


@dataclass(frozen=True)
class FiltrationDiagnostics:
    """Rank decisions whose deciding value fell within a factor NEAR_TOL_FACTOR of the threshold."""

    near_tolerance: list[dict[str, Any]] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.near_tolerance)


@dataclass(frozen=True, eq=False)
class Filtration:
    u_dims: list[int]
    u_ell_dims: list[int]
    w_dims: list[int]
    w_inf_dim: int
    d: int | None
    n_sexp: Order
    krylov_basis: np.ndarray
    w_bases: list[np.ndarray]
    w_inf_basis: np.ndarray
    diagnostics: FiltrationDiagnostics

    def to_dict(self, with_bases: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "u_dims": self.u_dims,
            "u_ell_dims": self.u_ell_dims,
            "w_dims": self.w_dims,
            "w_inf_dim": self.w_inf_dim,
            "d": "none" if self.d is None else self.d,
            "n_sexp": order_to_json(self.n_sexp),
            "near_tolerance": self.diagnostics.near_tolerance,
        }
        if with_bases:
            out["w_bases"] = [b.T.tolist() for b in self.w_bases]
            out["w_inf_basis"] = self.w_inf_basis.T.tolist()
        return out


def _check_near(near: list[dict[str, Any]], stage: str, step: int, value: float, threshold: float) -> None:
    if threshold > 0 and threshold / NEAR_TOL_FACTOR < value < threshold * NEAR_TOL_FACTOR:
        near.append({"stage": stage, "step": step, "value": value, "threshold": threshold})


def krylov_basis(alg: StepTwoAlgebra, cov: Covector, rank_tol: float, near: list[dict[str, Any]] | None = None) -> np.ndarray:
    """
    Orthonormal basis q_0, q_1, ... (columns) with span{q_0..q_{l-1}} = U^l, stopped at stabilization.

    Krylov spaces only depend on the lines of xi and mu, so both are normalized first; a new
    direction counts when its orthogonalized residual exceeds rank_tol * |J_mu|.
    """
    near = near if near is not None else []
    q1 = alg.q1
    xnorm = float(np.linalg.norm(cov.xi))
    if xnorm == 0.0:
        return np.zeros((q1, 0))
    mnorm = float(np.linalg.norm(cov.mu))
    J = alg.j_tensor @ (cov.mu / mnorm) if mnorm > 0 else np.zeros((q1, q1))
    threshold = rank_tol * float(np.linalg.norm(J, 2))

    cols = [cov.xi / xnorm]
    while len(cols) < q1:
        Q = np.column_stack(cols)
        v = J @ cols[-1]
        for _ in range(2):
            v = v - Q @ (Q.T @ v)
        r = float(np.linalg.norm(v))
        _check_near(near, "krylov", len(cols), r, threshold)
        if r <= threshold:
            break
        cols.append(v / r)
    return np.column_stack(cols)


def filtration(alg: StepTwoAlgebra, cov: Covector, rank_tol: float = DEFAULT_RANK_TOL) -> Filtration:
    """
    Dimensions and orthonormal bases of U^l, U_l, W_l and W_inf at cov.

    U_{l+1} is the null space of nu |-> J_nu q_l on U_l, computed by SVD; singular values up to
    rank_tol * C count as zero, C being the bracket norm (the largest value the map can reach
    on a unit q_l).
    """
    alg.check_covector(cov)
    q2 = alg.q2
    near: list[dict[str, Any]] = []
    Kb = krylov_basis(alg, cov, rank_tol, near)
    L = Kb.shape[1]
    u_dims = list(range(L + 1)) + [L]

    threshold = rank_tol * alg.bracket_norm
    basis = np.eye(q2)
    u_ell_dims = [q2]
    w_all: list[np.ndarray] = []
    for ell in range(L):
        if basis.shape[1] == 0:
            w_all.append(np.zeros((q2, 0)))
            u_ell_dims.append(0)
            continue
        K = np.einsum("ija,j->ia", alg.j_tensor, Kb[:, ell])
        _, s, vh = np.linalg.svd(K @ basis, full_matrices=True)
        for v in s:
            _check_near(near, "annihilator", ell, float(v), threshold)
        r = int(np.sum(s > threshold))
        w_all.append(basis @ vh[:r].T)
        basis = basis @ vh[r:].T
        u_ell_dims.append(basis.shape[1])

    dims = [w.shape[1] for w in w_all]
    nonzero = [ell for ell, dim in enumerate(dims) if dim > 0]
    d = nonzero[-1] if nonzero else None
    w_bases = w_all[: d + 1] if d is not None else []
    w_dims = dims[: d + 1] if d is not None else []
    w_inf_dim = basis.shape[1]
    n_sexp: Order = INFINITE if w_inf_dim > 0 else 2 * sum(ell * dim for ell, dim in enumerate(w_dims))

    if near:
        logger.debug("filtration at %s has %d near-tolerance rank decisions", cov.to_dict(), len(near))
    return Filtration(
        u_dims=u_dims,
        u_ell_dims=u_ell_dims,
        w_dims=w_dims,
        w_inf_dim=w_inf_dim,
        d=d,
        n_sexp=n_sexp,
        krylov_basis=Kb,
        w_bases=w_bases,
        w_inf_basis=basis,
        diagnostics=FiltrationDiagnostics(near_tolerance=near),
    )


def gamma_point(alg: StepTwoAlgebra, cov: Covector, rank_tol: float = DEFAULT_RANK_TOL) -> Order:
    return filtration(alg, cov, rank_tol).n_sexp


# --- a(0) and the Gram matrix -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AZero:
    """
    a(0) in the orthonormal basis adapted to V1 (+) W_0 (+) ... (+) W_d.

    `product_det` is the closed form prod_l ((l+1)/(l+2)!)^{2 dim W_l} * det(M).
    """

    matrix: np.ndarray
    det: float
    product_det: float
    w_dims: list[int]
    w_basis: np.ndarray


@dataclass(frozen=True, eq=False)
class HilbertGram:
    matrix: np.ndarray
    min_eigenvalue: float


def _w_free_filtration(alg: StepTwoAlgebra, cov: Covector, rank_tol: float) -> Filtration:
    filt = filtration(alg, cov, rank_tol)
    if filt.w_inf_dim > 0:
        raise DegenerateCovectorError(
            f"W_inf has dimension {filt.w_inf_dim} at {cov.to_dict()}; the Jacobian vanishes identically along zeta"
        )
    return filt


def _krylov_vectors(alg: StepTwoAlgebra, cov: Covector, count: int) -> list[np.ndarray]:
    J = alg.j_tensor @ cov.mu
    out = [np.array(cov.xi, dtype=float)]
    for _ in range(1, count):
        out.append(J @ out[-1])
    return out


def _bracket_right(alg: StepTwoAlgebra, p: np.ndarray) -> np.ndarray:
    """Matrix of w |-> [w, p], shape (q2, q1)."""
    return np.einsum("ija,j->ai", alg.c, p)


def _j_of(alg: StepTwoAlgebra, p: np.ndarray) -> np.ndarray:
    """Matrix of nu |-> J_nu p, shape (q1, q2)."""
    return np.einsum("ija,j->ia", alg.j_tensor, p)


def _m_blocks(alg: StepTwoAlgebra, filt: Filtration, P: list[np.ndarray]) -> list[list[np.ndarray]]:
    """blocks[s][r] is the matrix of nu in W_r |-> pi_s [J_nu J^r xi, J^s xi]."""
    out = []
    for s, Ws in enumerate(filt.w_bases):
        row = []
        Rs = _bracket_right(alg, P[s])
        for r, Wr in enumerate(filt.w_bases):
            row.append(Ws.T @ Rs @ _j_of(alg, P[r]) @ Wr)
        out.append(row)
    return out


def hilbert_gram(alg: StepTwoAlgebra, cov: Covector, rank_tol: float = DEFAULT_RANK_TOL) -> HilbertGram:
    """M with blocks M^r_s / (r+s+3), M^r_s(nu) = -pi_s [J_nu J^r xi, J^s xi]; symmetric positive definite."""
    filt = _w_free_filtration(alg, cov, rank_tol)
    P = _krylov_vectors(alg, cov, len(filt.w_bases))
    blocks = _m_blocks(alg, filt, P)
    rows = [
        np.hstack([-blocks[s][r] / (r + s + 3) for r in range(len(blocks))])
        for s in range(len(blocks))
    ]
    M = np.vstack(rows) if rows else np.zeros((0, 0))
    min_eig = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()) if M.size else float("inf")
    return HilbertGram(matrix=M, min_eigenvalue=min_eig)


def a_zero(alg: StepTwoAlgebra, cov: Covector, rank_tol: float = DEFAULT_RANK_TOL) -> AZero:
    """Leading matrix of the rescaled differential; det a(0) is the leading Jacobian coefficient."""
    filt = _w_free_filtration(alg, cov, rank_tol)
    q1, n = alg.q1, alg.n
    P = _krylov_vectors(alg, cov, len(filt.w_bases))
    offsets = np.cumsum([q1] + filt.w_dims)

    A = np.zeros((n, n))
    A[:q1, :q1] = np.eye(q1)
    spans = [slice(int(offsets[ell]), int(offsets[ell + 1])) for ell in range(len(filt.w_bases))]
    for ell, W in enumerate(filt.w_bases):
        A[spans[ell], :q1] = ell / (2.0 * math.factorial(ell + 2)) * (W.T @ _bracket_right(alg, P[ell]))
        A[:q1, spans[ell]] = _j_of(alg, P[ell]) @ W / math.factorial(ell + 2)

    blocks = _m_blocks(alg, filt, P)
    for s in range(len(blocks)):
        for r in range(len(blocks)):
            weight = (s - r - 1) / (2.0 * (r + s + 3) * math.factorial(r + 2) * math.factorial(s + 1))
            A[spans[s], spans[r]] = weight * blocks[s][r]

    gram = hilbert_gram(alg, cov, rank_tol)
    prefactor = 1.0
    for ell, dim in enumerate(filt.w_dims):
        prefactor *= ((ell + 1) / math.factorial(ell + 2)) ** (2 * dim)
    product_det = prefactor * float(np.linalg.det(gram.matrix))

    w_basis = np.hstack(filt.w_bases) if filt.w_bases else np.zeros((alg.q2, 0))
    return AZero(matrix=A, det=float(np.linalg.det(A)), product_det=product_det, w_dims=filt.w_dims, w_basis=w_basis)


# --- per-group exponents ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExponentReport:
    """Exponents of a group. Sampled reports certify gamma_hat_lower only as a lower bound."""

    name: str
    n: int
    Q: int
    gamma_group: int
    gamma_hat_lower: int
    witnesses: dict[str, Covector | None] = field(default_factory=dict)
    sample_count: int = 0
    seed: int | None = None
    source: str = "sampled"
    ce_exact: bool = False
    near_tolerance: int = 0

    @property
    def n_geo(self) -> int:
        return 2 * self.Q - self.n + self.gamma_group

    @property
    def n_ce_lower(self) -> int:
        return 2 * self.Q - self.n + self.gamma_hat_lower

    def chain_holds(self) -> bool:
        return self.n <= self.Q <= self.n_geo <= self.n_ce_lower

    def to_dict(self) -> dict[str, Any]:
        return {
            "group": self.name,
            "n": self.n,
            "Q": self.Q,
            "gamma_group": self.gamma_group,
            "gamma_hat_lower": self.gamma_hat_lower,
            "n_geo": self.n_geo,
            "n_ce_lower": self.n_ce_lower,
            "n_ce_exact": self.ce_exact,
            "source": self.source,
            "witnesses": {k: (v.to_dict() if v is not None else None) for k, v in self.witnesses.items()},
            "sample_count": self.sample_count,
            "seed": self.seed,
            "near_tolerance_decisions": self.near_tolerance,
        }


def _orders_for(
    alg: StepTwoAlgebra,
    xi: np.ndarray,
    mu: np.ndarray,
    rank_tol: float,
) -> list[tuple[Order, Covector, bool]]:
    out = []
    for i in range(xi.shape[0]):
        cov = Covector(xi=xi[i], mu=mu[i])
        filt = filtration(alg, cov, rank_tol)
        out.append((filt.n_sexp, cov, filt.diagnostics.flagged))
    return out


def group_exponents(
    alg: StepTwoAlgebra,
    n_samples: int = 256,
    strata: Sequence[Stratum] | None = None,
    seed: int = DEFAULT_SEED,
    rank_tol: float = DEFAULT_RANK_TOL,
    extra_covectors: Sequence[Covector] = (),
    stratum_samples: int = 16,
    workers: int = 1,
    chunk_size: int = 64,
    progress: bool = False,
) -> ExponentReport:
    """
    Gamma(G) as the minimum order over Gaussian covectors and a lower bound for Gamma-hat(G)
    as the largest finite order over Gaussian, stratified and user-supplied covectors.

    strata=None means default_strata(alg); pass [] to sample Gaussians only.
    """
    if n_samples < 1:
        raise SamplingError("group_exponents needs at least one Gaussian sample")
    strata = default_strata(alg) if strata is None else list(strata)

    def gaussian_chunk(_i: int, rng: np.random.Generator, size: int) -> list[tuple[Order, Covector, bool]]:
        xi, mu = gaussian_covectors(rng, alg, size)
        return _orders_for(alg, xi, mu, rank_tol)

    def strata_chunk(i: int, rng: np.random.Generator, size: int) -> list[tuple[Order, Covector, bool]]:
        xi, mu = gaussian_covectors(rng, alg, size, strata[i])
        return _orders_for(alg, xi, mu, rank_tol)

    gaussian = [
        r for chunk in map_chunks(gaussian_chunk, chunk_sizes(n_samples, chunk_size), (seed, 0), workers, progress, "gaussian")
        for r in chunk
    ]
    stratified = [
        r for chunk in map_chunks(strata_chunk, [stratum_samples] * len(strata), (seed, 1), workers, progress, "strata")
        for r in chunk
    ]
    extra = [(gamma_point(alg, c, rank_tol), c, False) for c in extra_covectors]

    finite_gauss = [(o, c) for o, c, _ in gaussian if o is not INFINITE]
    if not finite_gauss:
        raise SamplingError(f"all {n_samples} Gaussian covectors on '{alg.name}' gave an infinite order")
    g_min, g_wit = min(finite_gauss, key=lambda t: t[0])

    everything = gaussian + stratified + extra
    finite_all = [(o, c) for o, c, _ in everything if o is not INFINITE]
    h_max, h_wit = max(finite_all, key=lambda t: t[0])
    flagged = sum(1 for _, _, f in everything if f)
    if flagged:
        logger.warning("%s: %d of %d covectors had near-tolerance rank decisions", alg.name, flagged, len(everything))

    return ExponentReport(
        name=alg.name,
        n=alg.n,
        Q=alg.Q,
        gamma_group=int(g_min),
        gamma_hat_lower=int(h_max),
        witnesses={"gamma_group": g_wit, "gamma_hat_lower": h_wit},
        sample_count=len(everything),
        seed=seed,
        near_tolerance=flagged,
    )
