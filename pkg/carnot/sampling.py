"""
Deterministic covector sampling and chunked parallel evaluation.

Work is split into chunks whose boundaries depend only on the sample count and chunk size.
Each chunk gets its own Generator spawned from SeedSequence(seed) and results come back in
chunk order, so output does not depend on the number of workers.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

from .algebra import Covector, StepTwoAlgebra

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_BLOCK_PATTERNS = 1024


@dataclass(frozen=True)
class Stratum:
    """Zero pattern applied to Gaussian covectors: listed coordinates (0-based) are set to 0."""

    xi_zero: tuple[int, ...] = ()
    mu_zero: tuple[int, ...] = ()

    def apply(self, xi: np.ndarray, mu: np.ndarray, factor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Multiply the listed coordinates by factor (0 zeroes them, small values approach the stratum)."""
        xi = xi.copy()
        mu = mu.copy()
        if self.xi_zero:
            xi[:, list(self.xi_zero)] *= factor
        if self.mu_zero:
            mu[:, list(self.mu_zero)] *= factor
        return xi, mu

    @property
    def label(self) -> str:
        if not self.xi_zero and not self.mu_zero:
            return "full"
        parts = []
        if self.xi_zero:
            parts.append("xi0=" + ",".join(str(i + 1) for i in self.xi_zero))
        if self.mu_zero:
            parts.append("mu0=" + ",".join(str(i + 1) for i in self.mu_zero))
        return ";".join(parts)

    def to_dict(self) -> dict[str, list[int]]:
        return {"xi_zero": [i + 1 for i in self.xi_zero], "mu_zero": [i + 1 for i in self.mu_zero]}

    @classmethod
    def from_dict(cls, d: dict) -> "Stratum":
        """Inverse of to_dict (1-based indices)."""
        return cls(
            xi_zero=tuple(int(i) - 1 for i in d.get("xi_zero", [])),
            mu_zero=tuple(int(i) - 1 for i in d.get("mu_zero", [])),
        )


def default_strata(alg: StepTwoAlgebra) -> list[Stratum]:
    """
    Full support plus every xi zero-pattern over the V1 coordinate blocks (all-zero xi excluded).

    Falls back to zeroing one block at a time, and all-but-one, when the block count makes
    the full power set too large.
    """
    blocks = alg.v1_blocks or tuple((i,) for i in range(alg.q1))
    nb = len(blocks)
    strata = [Stratum()]
    if 2**nb <= MAX_BLOCK_PATTERNS:
        subsets = (s for r in range(1, nb) for s in itertools.combinations(range(nb), r))
    else:
        subsets = itertools.chain(
            ((i,) for i in range(nb)),
            (tuple(j for j in range(nb) if j != i) for i in range(nb)),
        )
    for subset in subsets:
        zero = tuple(sorted(i for b in subset for i in blocks[b]))
        strata.append(Stratum(xi_zero=zero))
    return strata


def chunk_sizes(total: int, chunk_size: int) -> list[int]:
    if total <= 0:
        return []
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def spawn_generators(seed: int | Sequence[int], count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def gaussian_covectors(
    rng: np.random.Generator,
    alg: StepTwoAlgebra,
    count: int,
    stratum: Stratum | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard Gaussian covectors, shapes (count, q1) and (count, q2), with the zero pattern applied."""
    xi = rng.standard_normal((count, alg.q1))
    mu = rng.standard_normal((count, alg.q2))
    if stratum is not None:
        xi, mu = stratum.apply(xi, mu)
    return xi, mu


def uniform_box(
    rng: np.random.Generator,
    lo: np.ndarray,
    hi: np.ndarray,
    count: int,
) -> np.ndarray:
    return lo + (hi - lo) * rng.random((count, lo.size))


def covector_rows(alg: StepTwoAlgebra, xi: np.ndarray, mu: np.ndarray) -> list[Covector]:
    return [Covector(xi=xi[i], mu=mu[i]) for i in range(xi.shape[0])]


def map_chunks(
    fn: Callable[[int, np.random.Generator, int], T],
    sizes: Sequence[int],
    seed: int | Sequence[int],
    workers: int = 1,
    progress: bool = False,
    desc: str = "chunks",
) -> list[T]:
    """
    Call fn(index, rng, size) for every chunk and return the results in chunk order.

    Threads are used when workers > 1; the per-chunk generators are fixed before dispatch.
    """
    rngs = spawn_generators(seed, len(sizes))
    jobs = list(zip(range(len(sizes)), rngs, sizes))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(i, rng, size) for i, rng, size in tqdm(jobs, desc=desc, unit="chunk", disable=not progress)]

    results: list[T | None] = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, i, rng, size): i for i, rng, size in jobs}
        with tqdm(total=len(futures), desc=desc, unit="chunk", disable=not progress) as pbar:
            for fut, i in futures.items():
                results[i] = fut.result()
                pbar.update(1)
    logger.debug("%s: %d chunks on %d workers", desc, len(jobs), workers)
    return results  # type: ignore[return-value]
