import os
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

from dotenv import load_dotenv

from .errors import InputError


load_dotenv()

DEFAULT_SEED = 20240521


def _int(key: str, default: int) -> int:
    v = os.environ.get(key)
    if v is None or v.strip() == "":
        return default
    try:
        return int(v)
    except ValueError:
        return default


def _float(key: str, default: float) -> float:
    v = os.environ.get(key)
    if v is None or v.strip() == "":
        return default
    try:
        return float(v)
    except ValueError:
        return default


def _parallel() -> bool:
    v = os.environ.get("CARNOT_PARALLEL", "").strip().lower()
    if v in ("0", "false", "no", "off"):
        return False
    return True


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation control for the exponential-map series."""

    tol: float = 1e-14
    max_terms: int = 256

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise InputError(f"series tolerance must be positive, got {self.tol}")
        if self.max_terms < 8:
            raise InputError(f"max_terms must be at least 8, got {self.max_terms}")


@dataclass(frozen=True)
class RunConfig:
    """Numeric defaults shared by the library and the CLI."""

    seed: int = DEFAULT_SEED
    workers: int = 1
    rank_tol: float = 1e-10
    chunk_size: int = 4096
    series: SeriesConfig = SeriesConfig()

    @classmethod
    def from_env(cls) -> "RunConfig":
        """
        Read defaults from environment (a .env file is loaded at import).

        Env vars:
          CARNOT_SEED, CARNOT_WORKERS, CARNOT_PARALLEL, CARNOT_RANK_TOL,
          CARNOT_SERIES_TOL, CARNOT_MAX_TERMS, CARNOT_CHUNK_SIZE
        """
        workers = _int("CARNOT_WORKERS", 1)
        if not _parallel() or workers < 1:
            workers = 1
        chunk = _int("CARNOT_CHUNK_SIZE", 4096)
        if chunk < 1:
            chunk = 4096
        return cls(
            seed=_int("CARNOT_SEED", DEFAULT_SEED),
            workers=workers,
            rank_tol=_float("CARNOT_RANK_TOL", 1e-10),
            chunk_size=chunk,
            series=SeriesConfig(
                tol=_float("CARNOT_SERIES_TOL", 1e-14),
                max_terms=_int("CARNOT_MAX_TERMS", 256),
            ),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "workers": self.workers,
            "rank_tol": self.rank_tol,
            "chunk_size": self.chunk_size,
            "series": {"tol": self.series.tol, "max_terms": self.series.max_terms},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        """Inverse of to_dict; every key is required."""
        try:
            cfg = cls(
                seed=int(d["seed"]),
                workers=max(1, int(d["workers"])),
                rank_tol=float(d["rank_tol"]),
                chunk_size=int(d["chunk_size"]),
                series=SeriesConfig(tol=float(d["series"]["tol"]), max_terms=int(d["series"]["max_terms"])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed run config: {e!r}") from e
        if cfg.chunk_size < 1:
            raise InputError(f"chunk_size must be positive, got {cfg.chunk_size}")
        return cfg


def get_run_config() -> RunConfig:
    return RunConfig.from_env()
