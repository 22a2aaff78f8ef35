"""
Hamiltonian geodesic flow of a step-two Carnot group in exponential coordinates.

  x' = xi_t,  u' = [x, xi_t]/2,  xi_t' = J_mu xi_t,  mu' = 0

integrated with fixed-step classical RK4. Used as an independent cross-check of expmap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .algebra import Covector, GroupPoint, StepTwoAlgebra, adjoint_matrix, group_inverse, group_product
from .errors import DivergenceError, InputError

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-3
ORDER_STEPS = (1e-2, 5e-3, 2.5e-3)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution on a uniform grid; row i of each array is the state at times[i]."""

    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    mu: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.x[i], self.u[i], self.xi[i], self.mu[i]

    @property
    def states(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        return [self.state(i) for i in range(len(self.times))]

    def point(self, i: int) -> GroupPoint:
        return GroupPoint(x=self.x[i], u=self.u[i])

    def endpoint(self) -> GroupPoint:
        return self.point(-1)


@dataclass(frozen=True)
class ConservationReport:
    energy_drift: float
    mu_drift: float
    ad_drift: float

    def max_drift(self) -> float:
        return max(self.energy_drift, self.mu_drift, self.ad_drift)

    def to_dict(self) -> dict[str, float]:
        return {"energy_drift": self.energy_drift, "mu_drift": self.mu_drift, "ad_drift": self.ad_drift}


@dataclass(frozen=True)
class EndpointComparison:
    """Two endpoints that should agree, with their max-abs difference."""

    lhs: GroupPoint
    rhs: GroupPoint

    @property
    def error(self) -> float:
        return float(np.max(np.abs(self.lhs.as_vector() - self.rhs.as_vector())))


def _grid(t_end: float, h: float) -> tuple[int, float]:
    if not (t_end > 0 and h > 0):
        raise InputError(f"t_end and step must be positive, got t_end={t_end}, h={h}")
    steps = max(1, int(round(t_end / h)))
    return steps, t_end / steps


def integrate(
    alg: StepTwoAlgebra,
    cov: Covector,
    t_end: float = 1.0,
    h: float = DEFAULT_STEP,
    start: GroupPoint | None = None,
) -> Trajectory:
    """
    RK4 solution from `start` (default the identity) with initial covector cov.

    The step is t_end / round(t_end / h) so the grid lands exactly on t_end.
    """
    alg.check_covector(cov)
    steps, dt = _grid(t_end, h)
    q1 = alg.q1
    J = alg.j_tensor @ cov.mu
    c = alg.c

    def rhs(x: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return xi, 0.5 * np.einsum("i,j,ija->a", x, xi, c), J @ xi

    x_hist = np.empty((steps + 1, q1))
    u_hist = np.empty((steps + 1, alg.q2))
    xi_hist = np.empty((steps + 1, q1))

    x = np.zeros(q1) if start is None else np.array(start.x, dtype=float)
    u = np.zeros(alg.q2) if start is None else np.array(start.u, dtype=float)
    xi = np.array(cov.xi, dtype=float)
    x_hist[0], u_hist[0], xi_hist[0] = x, u, xi

    for i in range(1, steps + 1):
        k1x, k1u, k1v = rhs(x, xi)
        k2x, k2u, k2v = rhs(x + 0.5 * dt * k1x, xi + 0.5 * dt * k1v)
        k3x, k3u, k3v = rhs(x + 0.5 * dt * k2x, xi + 0.5 * dt * k2v)
        k4x, k4u, k4v = rhs(x + dt * k3x, xi + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        xi = xi + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x_hist[i], u_hist[i], xi_hist[i] = x, u, xi

    if not (np.all(np.isfinite(x_hist)) and np.all(np.isfinite(u_hist)) and np.all(np.isfinite(xi_hist))):
        raise DivergenceError(f"geodesic flow produced non-finite state (t_end={t_end}, h={dt})")

    logger.debug("integrated %d RK4 steps of %.3g", steps, dt)
    return Trajectory(
        times=np.linspace(0.0, t_end, steps + 1),
        x=x_hist,
        u=u_hist,
        xi=xi_hist,
        mu=np.tile(cov.mu, (steps + 1, 1)),
    )


def check_conservation(alg: StepTwoAlgebra, traj: Trajectory) -> ConservationReport:
    """
    Drifts over the grid of |xi_t|, of mu_t, and of the right-invariant covector
    alpha(t) o Ad_{g(t)^-1}, whose matrix form is Ad_{g(t)^-1}^T alpha(t).
    """
    norm0 = float(np.linalg.norm(traj.xi[0]))
    energy = float(np.max(np.abs(np.linalg.norm(traj.xi, axis=1) - norm0)))
    mu_drift = float(np.max(np.abs(traj.mu - traj.mu[0])))

    alphas = np.empty((len(traj.times), alg.n))
    for i in range(len(traj.times)):
        ad_inv = adjoint_matrix(alg, group_inverse(traj.point(i)))
        alphas[i] = ad_inv.T @ np.concatenate([traj.xi[i], traj.mu[i]])
    ad_drift = float(np.max(np.abs(alphas - alphas[0])))
    return ConservationReport(energy_drift=energy, mu_drift=mu_drift, ad_drift=ad_drift)


def check_speed_symmetry(
    alg: StepTwoAlgebra,
    cov: Covector,
    lam: float,
    h: float = DEFAULT_STEP,
) -> EndpointComparison:
    """Endpoint of the flow of lam*cov at time 1 against the flow of cov at time lam."""
    if not 0 < lam <= 1:
        raise InputError(f"lambda must lie in (0, 1], got {lam}")
    scaled = integrate(alg, cov.scaled(lam), 1.0, h).endpoint()
    slowed = integrate(alg, cov, lam, h).endpoint()
    return EndpointComparison(lhs=scaled, rhs=slowed)


def check_left_translation(
    alg: StepTwoAlgebra,
    cov: Covector,
    p: GroupPoint,
    t_end: float = 1.0,
    h: float = DEFAULT_STEP,
) -> float:
    """Max deviation over the grid between the flow started at p and p * (flow from identity)."""
    base = integrate(alg, cov, t_end, h)
    moved = integrate(alg, cov, t_end, h, start=p)
    worst = 0.0
    for i in range(len(base.times)):
        expected = group_product(alg, p, base.point(i)).as_vector()
        worst = max(worst, float(np.max(np.abs(moved.point(i).as_vector() - expected))))
    return worst


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """One row per grid time: t, x1.., u1.., xi1.., mu1.. (1-based column suffixes)."""
    data: dict[str, np.ndarray] = {"t": traj.times}
    for prefix, arr in (("x", traj.x), ("u", traj.u), ("xi", traj.xi), ("mu", traj.mu)):
        for j in range(arr.shape[1]):
            data[f"{prefix}{j + 1}"] = arr[:, j]
    return pd.DataFrame(data)


def with_frequency(alg: StepTwoAlgebra, cov: Covector, omega: float = 4.0) -> Covector:
    """cov with unit xi and mu rescaled so that the spectral norm of J_mu is omega."""
    xi_norm = float(np.linalg.norm(cov.xi))
    j_norm = float(np.linalg.norm(alg.j_tensor @ cov.mu, 2))
    if xi_norm == 0.0 or j_norm == 0.0:
        raise InputError("order check needs xi != 0 and J_mu != 0")
    return Covector(xi=cov.xi / xi_norm, mu=cov.mu * (omega / j_norm))


@dataclass(frozen=True)
class OrderReport:
    steps: tuple[float, ...]
    errors: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(a / b if b > 0 else math.inf for a, b in zip(self.errors, self.errors[1:]))

    def to_dict(self) -> dict[str, list[float]]:
        return {"steps": list(self.steps), "errors": list(self.errors), "ratios": list(self.ratios)}


def convergence_order(
    alg: StepTwoAlgebra,
    cov: Covector,
    reference: GroupPoint,
    steps: Sequence[float] = ORDER_STEPS,
) -> OrderReport:
    """Endpoint errors at t = 1 against reference for each step; RK4 gives ratios near 16 when halving."""
    errors = tuple(EndpointComparison(integrate(alg, cov, 1.0, h).endpoint(), reference).error for h in steps)
    return OrderReport(steps=tuple(float(h) for h in steps), errors=errors)
