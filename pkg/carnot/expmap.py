"""
Sub-Riemannian exponential map of a step-two Carnot group, its differential and Jacobian.

For a covector (xi, mu) and J = J_mu:
  x = phi(J) xi,  phi(z) = (e^z - 1)/z
  u = sum_{k>=1} B_k(mu, xi),
  B_k = sum_{m=0}^{k} [J^m xi, J^{k-m} xi] / (2 (m+1)! (k-m)! (k+2)),  B_0 = 0.

Everything is evaluated on batches: arrays xi of shape (B, q1) and mu of shape (B, q2).
The single-covector functions wrap the batched ones with B = 1.

Truncation: u stops once C |J|^k |xi|^2 (2^{k+1} - 1) / (2 (k+2)!) < tol, C being the bracket
norm of the algebra. The differential reuses the same factorial decay through a coarser majorant
(see _dsexp_log_bound).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.special import gammaln

from .algebra import Covector, GroupPoint, StepTwoAlgebra, as_vector
from .config import SeriesConfig
from .errors import ConvergenceError, InputError

logger = logging.getLogger(__name__)

PHI_TAYLOR_MAX_NORM = 0.5
PHI_TAYLOR_TERMS = 16  # 0.5^17 / 18! < 1e-20
FD_STEP = 1e-5

DsexpMethod = Literal["series", "finite-difference"]


@dataclass(frozen=True)
class IdentityCheck:
    """Two sides of a numerical identity."""

    lhs: float
    rhs: float

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return self.abs_error / scale if scale > 0 else 0.0


class _Compensated:
    """Kahan summation over arrays of a fixed shape."""

    def __init__(self, shape: tuple[int, ...]) -> None:
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, term: np.ndarray) -> None:
        y = term - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


# --- batch plumbing ---------------------------------------------------------------------------


def batch_args(alg: StepTwoAlgebra, xi: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coerce to float arrays of shapes (B, q1) and (B, q2)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if xi.shape[1:] != (alg.q1,) or mu.shape[1:] != (alg.q2,) or xi.shape[0] != mu.shape[0]:
        raise InputError(
            f"covector batch shapes {xi.shape} and {mu.shape} do not match algebra ({alg.q1}, {alg.q2})"
        )
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(mu))):
        raise InputError("covector batch has non-finite entries")
    return xi, mu


def j_batch(alg: StepTwoAlgebra, mu: np.ndarray) -> np.ndarray:
    """Stack of J_mu matrices, shape (B, q1, q1)."""
    return np.einsum("ija,ba->bij", alg.j_tensor, mu)


def _skew_norms(J: np.ndarray) -> np.ndarray:
    if J.shape[-1] == 0:
        return np.zeros(J.shape[0])
    return np.linalg.norm(J, ord=2, axis=(-2, -1))


def _krylov_powers(J: np.ndarray, xi: np.ndarray, K: int) -> np.ndarray:
    """P[:, s] = J^s xi for s = 0..K, shape (B, K+1, q1)."""
    P = np.empty((xi.shape[0], K + 1, xi.shape[1]))
    P[:, 0] = xi
    for s in range(1, K + 1):
        P[:, s] = np.einsum("bij,bj->bi", J, P[:, s - 1])
    return P


def _matrix_powers(J: np.ndarray, K: int) -> np.ndarray:
    B, q1, _ = J.shape
    out = np.empty((B, K + 1, q1, q1))
    out[:, 0] = np.eye(q1)
    for s in range(1, K + 1):
        out[:, s] = J @ out[:, s - 1]
    return out


def _phi_spectral(J: np.ndarray) -> np.ndarray:
    """
    phi(J) for real skew J through the eigen-decomposition of the Hermitian matrix iJ.

    Eigenvalue -ih of J maps to phi(-ih) = e^{-ih/2} sin(h/2)/(h/2), which is the complex form of
    the per-rotation-block scalars sin(t)/t and (1 - cos t)/t.
    """
    h, V = np.linalg.eigh(1j * J)
    ph = np.exp(-0.5j * h) * np.sinc(h / (2.0 * np.pi))
    return np.real(np.einsum("bik,bk,bjk->bij", V, ph, V.conj()))


def _phi_taylor(Jpow: np.ndarray, K: int) -> np.ndarray:
    weights = np.exp(-gammaln(np.arange(K + 1) + 2.0))
    return np.einsum("k,bkij->bij", weights, Jpow[:, : K + 1])


def _truncation_order(
    log_bound: Callable[[np.ndarray], np.ndarray],
    jnorm: float,
    cfg: SeriesConfig,
    what: str,
) -> int:
    """Smallest k past the peak of the majorant whose bound is below cfg.tol."""
    ks = np.arange(1, cfg.max_terms + 1, dtype=float)
    with np.errstate(divide="ignore"):
        logb = log_bound(ks)
    ok = (logb < np.log(cfg.tol)) & (ks + 3.0 > 2.0 * jnorm)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        residual = float(np.exp(min(logb[-1], 700.0)))
        raise ConvergenceError(f"{what} series did not converge", residual_bound=residual, terms=cfg.max_terms)
    return int(ks[idx[0]])


def _sexp_log_bound(C: float, jnorm: float, xinorm: float) -> Callable[[np.ndarray], np.ndarray]:
    def bound(k: np.ndarray) -> np.ndarray:
        return (
            np.log(C)
            + k * np.log(jnorm)
            + 2.0 * np.log(xinorm)
            + np.log(2.0 ** (k + 1) - 1.0)
            - np.log(2.0)
            - gammaln(k + 3.0)
        )

    return bound


def _dsexp_log_bound(C: float, jnorm: float, xinorm: float) -> Callable[[np.ndarray], np.ndarray]:
    # Coarser majorant dominating every block term; |J| is floored so the D_k recursion
    # (one power of J short) stays covered.
    r = max(jnorm, 0.5)
    c = max(C, 1.0)
    s = max(xinorm, 1.0)

    def bound(k: np.ndarray) -> np.ndarray:
        return 2.0 * np.log(c) + 2.0 * np.log(s) + np.log(k + 2.0) + k * np.log(2.0 * r) - gammaln(k + 2.0)

    return bound


def _b_term(alg: StepTwoAlgebra, P: np.ndarray, k: int) -> np.ndarray:
    """B_k over the batch from precomputed Krylov powers."""
    if k == 0:
        return np.zeros((P.shape[0], alg.q2))
    m = np.arange(k + 1, dtype=float)
    w = np.exp(-gammaln(m + 2.0) - gammaln(k - m + 1.0)) / (2.0 * (k + 2))
    left = P[:, : k + 1] * w[None, :, None]
    right = P[:, k::-1]
    return np.einsum("bmi,bmj,ija->ba", left, right, alg.c, optimize=True)


def _phi_times(J: np.ndarray, jnorm: np.ndarray, P: np.ndarray, K: int) -> np.ndarray:
    """phi(J) xi per row: Taylor on small rows, spectral on the rest."""
    out = np.empty(P[:, 0].shape)
    small = jnorm <= PHI_TAYLOR_MAX_NORM
    if np.any(small):
        weights = np.exp(-gammaln(np.arange(K + 1) + 2.0))
        out[small] = np.einsum("k,bki->bi", weights, P[small, : K + 1])
    if np.any(~small):
        phi = _phi_spectral(J[~small])
        out[~small] = np.einsum("bij,bj->bi", phi, P[~small, 0])
    return out


# --- exponential map --------------------------------------------------------------------------


def sexp_batch(
    alg: StepTwoAlgebra,
    xi: np.ndarray,
    mu: np.ndarray,
    cfg: SeriesConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """SExp over a batch. Returns (x, u) with shapes (B, q1), (B, q2)."""
    cfg = cfg or SeriesConfig()
    xi, mu = batch_args(alg, xi, mu)
    J = j_batch(alg, mu)
    jnorm = _skew_norms(J)
    jmax = float(jnorm.max()) if jnorm.size else 0.0
    xmax = float(np.linalg.norm(xi, axis=1).max()) if xi.size else 0.0
    K = _truncation_order(_sexp_log_bound(alg.bracket_norm, jmax, xmax), jmax, cfg, "SExp")
    if np.any(jnorm <= PHI_TAYLOR_MAX_NORM):
        K = max(K, PHI_TAYLOR_TERMS)
    logger.debug("sexp batch of %d: |J| max %.3g, %d terms", xi.shape[0], jmax, K)

    P = _krylov_powers(J, xi, K)
    x = _phi_times(J, jnorm, P, K)
    acc = _Compensated((xi.shape[0], alg.q2))
    for k in range(1, K + 1):
        acc.add(_b_term(alg, P, k))
    return x, acc.total


def sexp(alg: StepTwoAlgebra, cov: Covector, cfg: SeriesConfig | None = None) -> GroupPoint:
    alg.check_covector(cov)
    x, u = sexp_batch(alg, cov.xi[None, :], cov.mu[None, :], cfg)
    return GroupPoint(x=x[0], u=u[0])


def bk(alg: StepTwoAlgebra, mu: np.ndarray, xi: np.ndarray, k: int) -> np.ndarray:
    """The k-th term B_k(mu, xi) of the V2 series."""
    if int(k) != k or k < 0:
        raise InputError(f"k must be a non-negative integer, got {k}")
    k = int(k)
    xi = as_vector(xi, alg.q1, "xi")
    mu = as_vector(mu, alg.q2, "mu")
    J = j_batch(alg, mu[None, :])
    P = _krylov_powers(J, xi[None, :], k)
    return _b_term(alg, P, k)[0]


# --- differential -----------------------------------------------------------------------------


def _dsexp_series_batch(alg: StepTwoAlgebra, xi: np.ndarray, mu: np.ndarray, cfg: SeriesConfig) -> np.ndarray:
    q1, q2 = alg.q1, alg.q2
    B = xi.shape[0]
    J = j_batch(alg, mu)
    jnorm = _skew_norms(J)
    jmax = float(jnorm.max()) if jnorm.size else 0.0
    xmax = float(np.linalg.norm(xi, axis=1).max()) if xi.size else 0.0
    K = _truncation_order(_dsexp_log_bound(alg.bracket_norm, jmax, xmax), jmax, cfg, "DSExp")
    K = max(K, PHI_TAYLOR_TERMS)
    logger.debug("dsexp batch of %d: |J| max %.3g, %d terms", B, jmax, K)

    P = _krylov_powers(J, xi, K)
    Jpow = _matrix_powers(J, K)

    phi = np.empty((B, q1, q1))
    small = jnorm <= PHI_TAYLOR_MAX_NORM
    if np.any(small):
        phi[small] = _phi_taylor(Jpow[small], K)
    if np.any(~small):
        phi[~small] = _phi_spectral(J[~small])

    # D[:, k] = d(J^k xi)/d mu as a (q1, q2) matrix: D_k = J D_{k-1} + J_nu J^{k-1} xi
    jt = alg.j_tensor
    D = np.zeros((B, K + 1, q1, q2))
    for k in range(1, K + 1):
        D[:, k] = J @ D[:, k - 1] + np.einsum("ija,bj->bia", jt, P[:, k - 1])

    x_mu = _Compensated((B, q1, q2))
    for k in range(1, K + 1):
        x_mu.add(D[:, k] * np.exp(-gammaln(k + 2.0)))

    # R[:, s] is w |-> [w, J^s xi] as a (q2, q1) matrix
    R = np.einsum("ijc,bsj->bsci", alg.c, P)
    u_xi = _Compensated((B, q2, q1))
    u_mu = _Compensated((B, q2, q2))
    for k in range(1, K + 1):
        m = np.arange(k + 1, dtype=float)
        coef = (k - 2.0 * m) * np.exp(-gammaln(m + 2.0) - gammaln(k - m + 2.0)) / (2.0 * (k + 2))
        Rk = R[:, k::-1]
        u_xi.add(np.einsum("m,bmci,bmij->bcj", coef, Rk, Jpow[:, : k + 1], optimize=True))
        u_mu.add(np.einsum("m,bmci,bmia->bca", coef, Rk, D[:, : k + 1], optimize=True))

    out = np.empty((B, alg.n, alg.n))
    out[:, :q1, :q1] = phi
    out[:, :q1, q1:] = x_mu.total
    out[:, q1:, :q1] = u_xi.total
    out[:, q1:, q1:] = u_mu.total
    return out


def _dsexp_fd_batch(alg: StepTwoAlgebra, xi: np.ndarray, mu: np.ndarray, cfg: SeriesConfig, h: float) -> np.ndarray:
    """Central differences of sexp; all 2n shifted covectors of every row go through one batch."""
    n, q1 = alg.n, alg.q1
    B = xi.shape[0]
    base = np.concatenate([xi, mu], axis=1)
    shifts = h * np.eye(n)
    pts = np.concatenate([base[:, None, :] + shifts[None], base[:, None, :] - shifts[None]], axis=1)
    pts = pts.reshape(B * 2 * n, n)
    x, u = sexp_batch(alg, pts[:, :q1], pts[:, q1:], cfg)
    vals = np.concatenate([x, u], axis=1).reshape(B, 2, n, n)
    # vals[b, side, j, :] is the image of the j-th shift; columns of the differential are inputs
    return np.transpose(vals[:, 0] - vals[:, 1], (0, 2, 1)) / (2.0 * h)


def dsexp_batch(
    alg: StepTwoAlgebra,
    xi: np.ndarray,
    mu: np.ndarray,
    cfg: SeriesConfig | None = None,
    method: DsexpMethod = "series",
    h: float = FD_STEP,
) -> np.ndarray:
    """DSExp over a batch, shape (B, n, n); rows are (x, u) outputs, columns (xi, mu) inputs."""
    cfg = cfg or SeriesConfig()
    xi, mu = batch_args(alg, xi, mu)
    if method == "series":
        return _dsexp_series_batch(alg, xi, mu, cfg)
    if method == "finite-difference":
        if not h > 0:
            raise InputError(f"finite-difference step must be positive, got {h}")
        return _dsexp_fd_batch(alg, xi, mu, cfg, h)
    raise InputError(f"unknown dsexp method '{method}'")


def dsexp(
    alg: StepTwoAlgebra,
    cov: Covector,
    cfg: SeriesConfig | None = None,
    method: DsexpMethod = "series",
) -> np.ndarray:
    alg.check_covector(cov)
    return dsexp_batch(alg, cov.xi[None, :], cov.mu[None, :], cfg, method=method)[0]


def jacobian_batch(
    alg: StepTwoAlgebra,
    xi: np.ndarray,
    mu: np.ndarray,
    cfg: SeriesConfig | None = None,
    method: DsexpMethod = "series",
) -> np.ndarray:
    return np.linalg.det(dsexp_batch(alg, xi, mu, cfg, method=method))


def jacobian(
    alg: StepTwoAlgebra,
    cov: Covector,
    cfg: SeriesConfig | None = None,
    method: DsexpMethod = "series",
) -> float:
    """Jacobian determinant of SExp at cov."""
    return float(np.linalg.det(dsexp(alg, cov, cfg, method=method)))


# --- rescalings -------------------------------------------------------------------------------


def zeta(lam: float, cov: Covector) -> Covector:
    """(xi, mu) -> (xi, lam mu)."""
    return Covector(xi=cov.xi, mu=lam * cov.mu)


def eta(lam: float, cov: Covector) -> Covector:
    """(xi, mu) -> (lam xi, mu)."""
    if lam == 0:
        raise InputError("eta is undefined at lambda = 0")
    return Covector(xi=lam * cov.xi, mu=cov.mu)


def dilate(lam: float, p: GroupPoint) -> GroupPoint:
    """delta_lam(x, u) = (lam x, lam^2 u)."""
    return GroupPoint(x=lam * p.x, u=lam * lam * p.u)


def jacobian_eta_identity(
    alg: StepTwoAlgebra,
    cov: Covector,
    lam: float,
    cfg: SeriesConfig | None = None,
) -> IdentityCheck:
    """lam^{2n-Q} Jac(eta_lam cov) against lam^Q Jac(cov)."""
    lhs = lam ** (2 * alg.n - alg.Q) * jacobian(alg, eta(lam, cov), cfg)
    rhs = lam ** alg.Q * jacobian(alg, cov, cfg)
    return IdentityCheck(lhs=lhs, rhs=rhs)


def jacobian_homogeneity(
    alg: StepTwoAlgebra,
    cov: Covector,
    lam: float,
    cfg: SeriesConfig | None = None,
) -> IdentityCheck:
    """Jac(lam cov) against lam^{2Q-2n} Jac(zeta_lam cov)."""
    lhs = jacobian(alg, cov.scaled(lam), cfg)
    rhs = lam ** (2 * alg.Q - 2 * alg.n) * jacobian(alg, zeta(lam, cov), cfg)
    return IdentityCheck(lhs=lhs, rhs=rhs)
