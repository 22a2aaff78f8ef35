"""
Asymptotics and volume checks built on the Jacobian of SExp.

  scaled_jac(cov, lam) = Jac(xi, lam mu) = lam^{2n-2Q} Jac(lam cov)

- leading_order: order of vanishing of scaled_jac as lam -> 0, from a log-log fit
- volume / geo_slope: Monte Carlo estimates of the intermediate-set volume
    vol(Z_lam(e, E)) = lam^{2Q-n} int_region |scaled_jac(cov, lam)| dcov,  E = SExp(region)
- ce_criterion / ce_search_violation: the inequality
    lam^{2Q-n} |scaled_jac(cov, lam)| >= lam^N |Jac(cov)|  for lam in (0, 1]

Membership in the regular domain is never decided exactly; in_domain_proxy is a necessary
condition and every result built on it says so.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from .algebra import Covector, StepTwoAlgebra
from .catalog import ga_in_domain, ga_matrix_of
from .config import DEFAULT_SEED, SeriesConfig
from .errors import AmbiguousOrderError, InputError, SamplingError
from .expmap import jacobian, jacobian_batch
from .gamma import INFINITE, Order, order_to_json
from .sampling import (
    Stratum,
    chunk_sizes,
    default_strata,
    gaussian_covectors,
    map_chunks,
    spawn_generators,
    uniform_box,
)

logger = logging.getLogger(__name__)

GRID_RATIO = 10.0 ** -0.25
DEFAULT_FLOOR = 1e-13
DEFAULT_LAMBDA_MIN = 1e-3
DEFAULT_LAMBDA_MAX = 0.5
MIN_GRID = 8
DROP_LARGEST = 2
TAIL_POINTS = 8
MIN_FIT_POINTS = 5
FIT_MARGIN = 1e2
SLOPE_TOL = 0.2
PROXY_GRID = 32
PROXY_CHECK_SAMPLES = 16
CRITERION_SLACK = 1e-12
VIOLATION_MARGIN = 1e-10
SHRINK_FACTORS = (1e-1, 1e-2, 1e-3)


def geometric_grid(lo: float = DEFAULT_LAMBDA_MIN, hi: float = DEFAULT_LAMBDA_MAX) -> np.ndarray:
    """Decreasing grid from hi to lo with ratio 10^-1/4 (endpoints exact)."""
    if not (0 < lo < hi):
        raise InputError(f"lambda grid needs 0 < lo < hi, got lo={lo}, hi={hi}")
    steps = max(1, int(round(np.log10(hi / lo) / -np.log10(GRID_RATIO))))
    return np.logspace(np.log10(hi), np.log10(lo), steps + 1)


def _scaled_values(alg: StepTwoAlgebra, cov: Covector, lams: np.ndarray, cfg: SeriesConfig | None) -> np.ndarray:
    xi = np.tile(cov.xi, (lams.size, 1))
    mu = lams[:, None] * cov.mu[None, :]
    return jacobian_batch(alg, xi, mu, cfg)


def scaled_jac(alg: StepTwoAlgebra, cov: Covector, lam: float, cfg: SeriesConfig | None = None) -> float:
    """Jac(SExp) at zeta_lam(cov) = (xi, lam mu)."""
    alg.check_covector(cov)
    return float(_scaled_values(alg, cov, np.array([float(lam)]), cfg)[0])


# --- domain proxy -----------------------------------------------------------------------------


def in_domain_proxy(
    alg: StepTwoAlgebra,
    cov: Covector,
    grid: int = PROXY_GRID,
    floor: float = DEFAULT_FLOOR,
    cfg: SeriesConfig | None = None,
) -> bool:
    """
    Necessary condition for membership in the regular domain.

    G_A groups use the box |mu . A_j| < 2 pi and the closed-form Jacobian. Otherwise the Jacobian
    along t cov, t = 1/grid .. 1, must stay positive; by homogeneity its sign is that of
    scaled_jac(cov, t). Values within floor of zero count as positive except at t = 1.
    """
    alg.check_covector(cov)
    A = ga_matrix_of(alg)
    if A is not None:
        return ga_in_domain(A, cov, grid)
    if grid < 8:
        raise InputError(f"domain grid needs at least 8 points, got {grid}")
    vals = _scaled_values(alg, cov, np.arange(1, grid + 1) / grid, cfg)
    return bool(np.all(vals > -floor) and vals[-1] > floor)


# --- leading order ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LeadingOrder:
    """
    Numerical order of vanishing and leading coefficient of scaled_jac at lam = 0.

    slope is the raw fitted exponent; gamma_est its nearest integer.
    """

    gamma_est: Order
    coeff_est: float
    fit_residual: float
    lambda_grid: np.ndarray
    slope: float = float("nan")

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_est": order_to_json(self.gamma_est),
            "coeff_est": self.coeff_est,
            "slope": None if np.isnan(self.slope) else self.slope,
            "fit_residual": self.fit_residual,
            "lambda_grid": self.lambda_grid.tolist(),
        }


def leading_order(
    alg: StepTwoAlgebra,
    cov: Covector,
    grid: Sequence[float] | None = None,
    floor: float = DEFAULT_FLOOR,
    cfg: SeriesConfig | None = None,
) -> LeadingOrder:
    """
    Fit log|scaled_jac| = a + s log(lam) + b lam on the tail of the grid.

    The tail drops the two largest lam and keeps the smallest TAIL_POINTS values that sit
    comfortably above floor. The linear term absorbs the next order of the expansion.
    """
    alg.check_covector(cov)
    lams = geometric_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))[::-1]
    if lams.size < MIN_GRID or np.any(lams <= 0):
        raise InputError(f"leading-order grid needs at least {MIN_GRID} positive points")
    if not floor > 0:
        raise InputError(f"floor must be positive, got {floor}")

    vals = _scaled_values(alg, cov, lams, cfg)
    if np.all(np.abs(vals) < floor):
        logger.debug("scaled Jacobian below %.1e on the whole grid", floor)
        return LeadingOrder(gamma_est=INFINITE, coeff_est=0.0, fit_residual=0.0, lambda_grid=lams)

    tail_l, tail_v = lams[DROP_LARGEST:], vals[DROP_LARGEST:]
    keep = np.abs(tail_v) >= FIT_MARGIN * floor
    tail_l, tail_v = tail_l[keep][-TAIL_POINTS:], tail_v[keep][-TAIL_POINTS:]
    if tail_l.size < MIN_FIT_POINTS:
        raise AmbiguousOrderError(
            float("nan"),
            f"only {tail_l.size} grid values clear the floor; move the grid toward larger lambda",
        )

    X = np.column_stack([np.ones_like(tail_l), np.log(tail_l), tail_l])
    y = np.log(np.abs(tail_v))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    slope = float(coef[1])
    gamma = int(round(slope))
    if abs(slope - gamma) > SLOPE_TOL or gamma < 0:
        raise AmbiguousOrderError(slope)
    sign = float(np.sign(tail_v[-1]))
    return LeadingOrder(
        gamma_est=gamma,
        coeff_est=sign * float(np.exp(coef[0])),
        fit_residual=resid,
        lambda_grid=lams,
        slope=slope,
    )


# --- volumes ----------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovectorBox:
    """Product of intervals [lo_i, hi_i] in (xi, mu) coordinates."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError(f"box bounds must be vectors of equal length, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("box bounds must be finite")
        if np.any(hi <= lo):
            raise InputError("box has a zero-width side")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def check(self, alg: StepTwoAlgebra) -> "CovectorBox":
        if self.lo.size != alg.n:
            raise InputError(f"box has {self.lo.size} sides, the group has dimension {alg.n}")
        return self

    def sample(self, rng: np.random.Generator, alg: StepTwoAlgebra, count: int) -> tuple[np.ndarray, np.ndarray]:
        pts = uniform_box(rng, self.lo, self.hi, count)
        return pts[:, : alg.q1], pts[:, alg.q1:]

    def to_dict(self) -> dict[str, list[float]]:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _abs_jac_samples(
    alg: StepTwoAlgebra,
    region: CovectorBox,
    lam: float,
    n_samples: int,
    seed: int | Sequence[int],
    workers: int,
    chunk_size: int,
    progress: bool,
    cfg: SeriesConfig | None,
    method: str = "series",
) -> np.ndarray:
    def chunk(_i: int, rng: np.random.Generator, size: int) -> np.ndarray:
        xi, mu = region.sample(rng, alg, size)
        return np.abs(jacobian_batch(alg, xi, lam * mu, cfg, method=method))  # type: ignore[arg-type]

    parts = map_chunks(chunk, chunk_sizes(n_samples, chunk_size), seed, workers, progress, f"volume lam={lam:.3g}")
    return np.concatenate(parts)


def _mean_and_error(values: np.ndarray) -> tuple[float, float]:
    if values.size < 2:
        raise InputError("Monte Carlo needs at least two samples")
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(values.size))


def proxy_failures(
    alg: StepTwoAlgebra,
    region: CovectorBox,
    seed: int = DEFAULT_SEED,
    count: int = PROXY_CHECK_SAMPLES,
    cfg: SeriesConfig | None = None,
) -> int:
    """Number of `count` uniform samples of the region rejected by in_domain_proxy."""
    rng = spawn_generators((seed, 2), 1)[0]
    xi, mu = region.sample(rng, alg, count)
    failed = sum(not in_domain_proxy(alg, Covector(xi=xi[i], mu=mu[i]), cfg=cfg) for i in range(count))
    if failed:
        logger.warning("%d of %d region samples fail the domain proxy; E may leave the regular set", failed, count)
    return failed


def volume(
    alg: StepTwoAlgebra,
    region: CovectorBox,
    lam: float,
    n_samples: int = 10_000,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    chunk_size: int = 4096,
    progress: bool = False,
    cfg: SeriesConfig | None = None,
    check_domain: bool = True,
) -> tuple[float, float]:
    """Monte Carlo estimate of vol(Z_lam(e, SExp(region))) and its standard error."""
    region.check(alg)
    if not 0 < lam <= 1:
        raise InputError(f"lambda must lie in (0, 1], got {lam}")
    if check_domain:
        proxy_failures(alg, region, seed, cfg=cfg)
    vals = _abs_jac_samples(alg, region, lam, n_samples, (seed, 0), workers, chunk_size, progress, cfg)
    mean, err = _mean_and_error(vals)
    scale = lam ** (2 * alg.Q - alg.n) * region.volume
    return scale * mean, scale * err


def direct_volume(
    alg: StepTwoAlgebra,
    region: CovectorBox,
    n_samples: int = 10_000,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    chunk_size: int = 4096,
    progress: bool = False,
    cfg: SeriesConfig | None = None,
) -> tuple[float, float]:
    """
    vol(SExp(region)) as int_region |Jac| on an independent sample stream with finite-difference
    Jacobians; a second estimator for volume(..., lam=1).
    """
    region.check(alg)
    vals = _abs_jac_samples(
        alg, region, 1.0, n_samples, (seed, 3), workers, chunk_size, progress, cfg, method="finite-difference"
    )
    mean, err = _mean_and_error(vals)
    return region.volume * mean, region.volume * err


@dataclass(frozen=True, eq=False)
class VolumeScan:
    lambdas: np.ndarray
    volumes: np.ndarray
    std_errors: np.ndarray
    slope: float
    slope_error: float
    region: CovectorBox
    n_samples: int
    seed: int
    proxy_failures: int = 0

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lambda": self.lambdas, "volume": self.volumes, "std_error": self.std_errors})

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambdas": self.lambdas.tolist(),
            "volumes": self.volumes.tolist(),
            "std_errors": self.std_errors.tolist(),
            "slope": self.slope,
            "slope_error": self.slope_error,
            "region": self.region.to_dict(),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "domain_check": "proxy",
            "proxy_failures": self.proxy_failures,
        }


def geo_slope(
    alg: StepTwoAlgebra,
    region: CovectorBox,
    lambda_grid: Sequence[float] | None = None,
    n_samples: int = 10_000,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    chunk_size: int = 4096,
    progress: bool = False,
    cfg: SeriesConfig | None = None,
) -> VolumeScan:
    """
    Volumes over the grid and their log-log slope, weighted by inverse variance of log(volume).
    Every lambda reuses the same covector sample.
    """
    region.check(alg)
    lams = geometric_grid(1e-3, 1e-1) if lambda_grid is None else np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    if lams.size < 2:
        raise InputError("geo_slope needs at least two lambda values")
    failed = proxy_failures(alg, region, seed, cfg=cfg)

    vols = np.empty(lams.size)
    errs = np.empty(lams.size)
    for i, lam in enumerate(tqdm(lams, desc="volume scan", unit="lambda", disable=not progress)):
        vols[i], errs[i] = volume(
            alg, region, float(lam), n_samples, seed, workers, chunk_size, False, cfg, check_domain=False
        )
    degenerate = vols <= 3.0 * errs
    if np.any(degenerate):
        raise SamplingError(
            f"volume estimate consistent with zero at lambda={lams[degenerate][0]:.3g}; the region is degenerate"
        )

    x = np.log(lams)
    y = np.log(vols)
    w = vols / np.maximum(errs, 1e-300)
    W = w * w
    xm = np.sum(W * x) / np.sum(W)
    ym = np.sum(W * y) / np.sum(W)
    sxx = np.sum(W * (x - xm) ** 2)
    slope = float(np.sum(W * (x - xm) * (y - ym)) / sxx)
    return VolumeScan(
        lambdas=lams,
        volumes=vols,
        std_errors=errs,
        slope=slope,
        slope_error=float(np.sqrt(1.0 / sxx)),
        region=region,
        n_samples=n_samples,
        seed=seed,
        proxy_failures=failed,
    )


# --- curvature exponent criterion -------------------------------------------------------------


@dataclass(frozen=True)
class CriterionResult:
    """Outcome of the grid test; lam, lhs, rhs describe the first violation when holds is False."""

    holds: bool
    N: float
    worst_slack: float
    lam: float | None = None
    lhs: float | None = None
    rhs: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "holds": self.holds,
            "N": self.N,
            "worst_slack": self.worst_slack,
            "witness": None if self.holds else {"lambda": self.lam, "lhs": self.lhs, "rhs": self.rhs},
            "domain_check": "proxy",
        }


def _criterion_on_values(
    alg: StepTwoAlgebra,
    N: float,
    lams: np.ndarray,
    scaled: np.ndarray,
    jac1: float,
    slack_tol: float = CRITERION_SLACK,
) -> CriterionResult:
    lhs = lams ** (2 * alg.Q - alg.n) * np.abs(scaled)
    rhs = lams**N * abs(jac1)
    slack = (lhs - rhs) / np.maximum(np.maximum(lhs, rhs), np.finfo(float).tiny)
    bad = np.nonzero(slack < -slack_tol)[0]
    worst = float(np.min(slack))
    if bad.size == 0:
        return CriterionResult(holds=True, N=N, worst_slack=worst)
    i = int(bad[0])
    return CriterionResult(holds=False, N=N, worst_slack=worst, lam=float(lams[i]), lhs=float(lhs[i]), rhs=float(rhs[i]))


def ce_criterion(
    alg: StepTwoAlgebra,
    N: float,
    cov: Covector,
    lambda_grid: Sequence[float] | None = None,
    cfg: SeriesConfig | None = None,
) -> CriterionResult:
    """lam^{2Q-n} |scaled_jac(cov, lam)| >= lam^N |Jac(cov)| on the grid, relative slack 1e-12."""
    alg.check_covector(cov)
    if not in_domain_proxy(alg, cov, cfg=cfg):
        raise InputError("covector rejected by the domain proxy")
    lams = geometric_grid(1e-3, 1.0) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if lams.size == 0 or np.any(lams <= 0) or np.any(lams > 1):
        raise InputError("criterion grid must be a non-empty subset of (0, 1]")
    jac1 = jacobian(alg, cov, cfg)
    return _criterion_on_values(alg, N, lams, _scaled_values(alg, cov, lams, cfg), jac1)


def ce_slope_at_one(alg: StepTwoAlgebra, N: float, cov: Covector, h: float = 1e-5, cfg: SeriesConfig | None = None) -> float:
    """
    d/dlam at lam = 1 of f(lam)^2, f(lam) = lam^{2Q-n-N} |scaled_jac(cov, lam)| / |Jac(cov)|.
    The criterion forces this to be <= 0. Diagnostic only.
    """
    alg.check_covector(cov)
    lams = np.array([1.0 - h, 1.0, 1.0 + h])
    vals = np.abs(_scaled_values(alg, cov, lams, cfg))
    if vals[1] == 0.0:
        raise InputError("Jacobian vanishes at the covector")
    f = lams ** (2 * alg.Q - alg.n - N) * vals / vals[1]
    return float((f[2] ** 2 - f[0] ** 2) / (2.0 * h))


@dataclass(frozen=True, eq=False)
class Violation:
    cov: Covector
    lam: float
    lhs: float
    rhs: float
    source: str

    def to_dict(self) -> dict[str, Any]:
        return {"covector": self.cov.to_dict(), "lambda": self.lam, "lhs": self.lhs, "rhs": self.rhs, "source": self.source}


def ce_search_violation(
    alg: StepTwoAlgebra,
    N: float,
    n_samples: int = 10_000,
    seed: int = DEFAULT_SEED,
    strata: Sequence[Stratum] | None = None,
    shrink: Sequence[float] = SHRINK_FACTORS,
    lambda_grid: Sequence[float] | None = None,
    workers: int = 1,
    progress: bool = False,
    cfg: SeriesConfig | None = None,
) -> Violation | None:
    """
    Search for a proxy-accepted covector violating ce_criterion at order N.

    The budget is split evenly between Gaussian covectors and, for every non-full stratum and
    shrink factor, Gaussians whose stratum coordinates are multiplied by the factor. Sources are
    scanned in that order and the first violation with relative margin 1e-10 is returned.
    """
    if not N > 0:
        raise InputError(f"N must be positive, got {N}")
    lams = geometric_grid(1e-3, 1.0) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    strata = default_strata(alg) if strata is None else list(strata)
    sources: list[tuple[Stratum | None, float]] = [(None, 1.0)]
    sources += [(s, f) for s in strata if s.xi_zero or s.mu_zero for f in shrink]
    per_source = max(1, n_samples // len(sources))
    A = ga_matrix_of(alg)
    t_proxy = np.arange(1, PROXY_GRID + 1) / PROXY_GRID
    all_lams = np.concatenate([t_proxy, lams])

    def search(i: int, rng: np.random.Generator, size: int) -> Violation | None:
        stratum, factor = sources[i]
        xi, mu = gaussian_covectors(rng, alg, size)
        if stratum is not None:
            xi, mu = stratum.apply(xi, mu, factor)
        label = "gaussian" if stratum is None else f"{stratum.label}@{factor:g}"
        for b in range(size):
            cov = Covector(xi=xi[b], mu=mu[b])
            vals = _scaled_values(alg, cov, all_lams, cfg)
            proxy, scaled = vals[:PROXY_GRID], vals[PROXY_GRID:]
            if A is not None:
                if not ga_in_domain(A, cov):
                    continue
            elif not (np.all(proxy > -DEFAULT_FLOOR) and proxy[-1] > DEFAULT_FLOOR):
                continue
            res = _criterion_on_values(alg, N, lams, scaled, float(proxy[-1]), VIOLATION_MARGIN)
            if not res.holds:
                return Violation(cov=cov, lam=res.lam, lhs=res.lhs, rhs=res.rhs, source=label)  # type: ignore[arg-type]
        return None

    found = map_chunks(search, [per_source] * len(sources), (seed, 4), workers, progress, "ce search")
    for v in found:
        if v is not None:
            logger.info("violation at N=%g from %s, lambda=%.3g", N, v.source, v.lam)
            return v
    return None

