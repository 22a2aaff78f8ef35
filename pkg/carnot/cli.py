"""
Command-line entry point.

  carnot exponents --group star:2 --strata none
  carnot leading-order --group heisenberg --xi 1,0 --mu 1
  carnot volume-scan --group heisenberg --region 0.9:1.1,0.9:1.1,-0.1:0.1 --out csv
  carnot verify --group free:3
  carnot --manifest previous_run.json

Groups: heisenberg | free:k | star:k | ga:<A.json> | <group spec .json>.
Vectors are comma separated; pass negative leading entries as --xi=-1,2.

Every output starts with its run manifest ("schema": 1), numeric config included; replaying it
through --manifest reproduces the result whatever the current environment.

Exit codes: 0 ok, 1 failed verify property or internal error, 2 input error, 3 series did
not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import analysis, catalog, expmap, flow, gamma
from .algebra import Covector, StepTwoAlgebra, validate
from .config import RunConfig, get_run_config
from .errors import AmbiguousOrderError, CarnotError, ConvergenceError, DegenerateCovectorError, InputError
from .sampling import Stratum, covector_rows, default_strata, gaussian_covectors

logger = logging.getLogger(__name__)

SCHEMA = 1
_UNRECORDED = {"func", "verbose", "progress", "manifest"}


def tool_version() -> str:
    try:
        return version("carnot-exponents")
    except PackageNotFoundError:
        return "0+unknown"


# --- output -----------------------------------------------------------------------------------


def _encode(obj: Any, indent: int = 0) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    pad = "  " * (indent + 1)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return _encode(obj)


@dataclass
class RunManifest:
    """Everything needed to rerun a command; wall_time is the only field a replay changes."""

    command: str
    group: str
    params: dict[str, Any]
    seed: int
    argv: list[str]
    config: dict[str, Any] = field(default_factory=dict)
    version: str = field(default_factory=tool_version)
    wall_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "group": self.group,
            "params": self.params,
            "seed": self.seed,
            "argv": self.argv,
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
        }


def load_manifest(path: str | Path) -> dict[str, Any]:
    """Manifest of a JSON document, a bare manifest, or the comment line heading a CSV."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise InputError(f"cannot read manifest {p}: {e}") from e
    if text.startswith("#"):
        text = text.splitlines()[0].lstrip("#").strip()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"manifest {p} is not JSON: {e}") from e
    manifest = doc.get("manifest", doc) if isinstance(doc, dict) else None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("argv"), list):
        raise InputError(f"manifest {p} has no argv list")
    return manifest


def load_manifest_argv(path: str | Path) -> list[str]:
    return [str(a) for a in load_manifest(path)["argv"]]


# --- argument types ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e


def _region(text: str) -> analysis.CovectorBox:
    try:
        pairs = [tuple(float(v) for v in side.split(":")) for side in text.split(",")]
        lo, hi = zip(*pairs)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected lo:hi,lo:hi,..., got '{text}'") from e
    return analysis.CovectorBox(lo=np.array(lo), hi=np.array(hi))


def _covector(alg: StepTwoAlgebra, args: argparse.Namespace) -> Covector:
    if args.xi is None:
        raise InputError("--xi is required")
    mu = args.mu if args.mu is not None else [0.0] * alg.q2
    return alg.covector(args.xi, mu)


def _lambda_grid(args: argparse.Namespace, lo: float, hi: float) -> np.ndarray:
    """--grid wins over --lambda-min/--lambda-max; the command supplies the default range."""
    if args.grid:
        return np.sort(np.asarray(args.grid, dtype=float))[::-1]
    return analysis.geometric_grid(args.lambda_min if args.lambda_min is not None else lo,
                                   args.lambda_max if args.lambda_max is not None else hi)


def _default_region(alg: StepTwoAlgebra) -> analysis.CovectorBox:
    lo = np.concatenate([np.full(alg.q1, 0.9), np.full(alg.q2, -0.1)])
    hi = np.concatenate([np.full(alg.q1, 1.1), np.full(alg.q2, 0.1)])
    return analysis.CovectorBox(lo=lo, hi=hi)


def _strata(alg: StepTwoAlgebra, choice: str) -> tuple[list[Stratum], list[Covector]]:
    """
    Strata and user covectors for --strata.

    auto is default_strata, none is full support only. Anything else is a JSON file holding a
    list whose entries are masks {"xi_zero": [...], "mu_zero": [...]} (1-based), covectors
    {"xi": [...], "mu": [...]}, or the string "auto". Full support is always included.
    """
    if choice == "auto":
        return default_strata(alg), []
    if choice == "none":
        return [Stratum()], []
    path = Path(choice)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read strata file {path}: {e}") from e
    if not isinstance(entries, list):
        raise InputError(f"strata file {path} must hold a JSON list")

    strata, covs = [Stratum()], []
    for entry in entries:
        if entry == "auto":
            strata += [s for s in default_strata(alg) if s not in strata]
        elif isinstance(entry, dict) and "xi" in entry:
            try:
                covs.append(alg.covector(entry["xi"], entry.get("mu", [0.0] * alg.q2)))
            except (TypeError, ValueError) as e:
                raise InputError(f"bad covector in {path}: {entry}") from e
        elif isinstance(entry, dict) and ("xi_zero" in entry or "mu_zero" in entry):
            try:
                mask = Stratum.from_dict(entry)
            except (TypeError, ValueError) as e:
                raise InputError(f"bad mask in {path}: {entry}") from e
            if not (all(0 <= i < alg.q1 for i in mask.xi_zero) and all(0 <= i < alg.q2 for i in mask.mu_zero)):
                raise InputError(f"mask {entry} is out of range for {alg.name}")
            if mask not in strata:
                strata.append(mask)
        else:
            raise InputError(f"unrecognised strata entry in {path}: {entry!r}")
    return strata, covs


# --- commands ---------------------------------------------------------------------------------


@dataclass
class Outcome:
    result: Any
    exit_code: int = 0
    frame: Any = None  # pandas DataFrame for --out csv


def cmd_info(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    diag = validate(alg)
    return Outcome({
        "name": alg.name,
        "n": alg.n,
        "Q": alg.Q,
        "q1": alg.q1,
        "q2": alg.q2,
        "bracket_norm": alg.bracket_norm,
        "diagnostics": diag.to_dict(),
        "spec": alg.to_spec(),
    })


def cmd_sexp(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    p = expmap.sexp(alg, cov, cfg.series)
    return Outcome({"covector": cov.to_dict(), "x": p.x, "u": p.u, "jacobian": expmap.jacobian(alg, cov, cfg.series)})


def cmd_jacobian(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    p = expmap.sexp(alg, cov, cfg.series)
    D = expmap.dsexp(alg, cov, cfg.series, method=args.method)
    return Outcome({
        "covector": cov.to_dict(),
        "x": p.x,
        "u": p.u,
        "jacobian": float(np.linalg.det(D)),
        "method": args.method,
        "dsexp": D,
    })


def cmd_flow(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    traj = flow.integrate(alg, cov, args.t_end, args.step)
    if args.out == "csv":
        return Outcome(None, frame=flow.trajectory_frame(traj))
    scaled = cov.scaled(args.t_end)
    ref = expmap.sexp(alg, scaled, cfg.series)
    cmp = flow.EndpointComparison(lhs=traj.endpoint(), rhs=ref)
    return Outcome({
        "covector": cov.to_dict(),
        "t_end": args.t_end,
        "steps": traj.steps,
        "endpoint": traj.endpoint().to_dict(),
        "sexp_endpoint": ref.to_dict(),
        "endpoint_error": cmp.error,
        "conservation": flow.check_conservation(alg, traj).to_dict(),
    })


def cmd_filtration(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    filt = gamma.filtration(alg, cov, cfg.rank_tol)
    out: dict[str, Any] = {"covector": cov.to_dict(), "filtration": filt.to_dict(with_bases=args.bases)}
    if filt.w_inf_dim == 0:
        az = gamma.a_zero(alg, cov, cfg.rank_tol)
        out["a_zero"] = {"det": az.det, "product_det": az.product_det}
        out["hilbert_gram_min_eigenvalue"] = gamma.hilbert_gram(alg, cov, cfg.rank_tol).min_eigenvalue
    return Outcome(out)


def cmd_exponents(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    strata, extra = _strata(res.algebra, args.strata)
    report = gamma.group_exponents(
        res.algebra,
        n_samples=args.samples or 256,
        strata=strata,
        seed=args.seed,
        rank_tol=cfg.rank_tol,
        extra_covectors=extra,
        workers=args.workers,
        progress=args.progress,
    )
    out = report.to_dict()
    out["strata"] = [s.label for s in strata]
    out["user_covectors"] = len(extra)
    known = res.known()
    if known is not None:
        out["closed_form"] = known.to_dict()
        out["matches_closed_form"] = (
            report.gamma_group == known.gamma_group and report.gamma_hat_lower == known.gamma_hat_lower
        )
    return Outcome(out)


def cmd_leading_order(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    grid = _lambda_grid(args, analysis.DEFAULT_LAMBDA_MIN, analysis.DEFAULT_LAMBDA_MAX)
    lo = analysis.leading_order(alg, cov, grid, floor=args.floor, cfg=cfg.series)
    return Outcome({
        "covector": cov.to_dict(),
        "leading_order": lo.to_dict(),
        "gamma_point": gamma.order_to_json(gamma.gamma_point(alg, cov, cfg.rank_tol)),
    })


def cmd_volume_scan(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    region = args.region or _default_region(alg)
    scan = analysis.geo_slope(
        alg,
        region,
        _lambda_grid(args, 1e-3, 1e-1),
        n_samples=args.samples or 10_000,
        seed=args.seed,
        workers=args.workers,
        chunk_size=cfg.chunk_size,
        progress=args.progress,
        cfg=cfg.series,
    )
    if args.out == "csv":
        return Outcome(None, frame=scan.frame())
    return Outcome(scan.to_dict())


def cmd_ce_check(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    cov = _covector(alg, args)
    N = args.N if args.N is not None else 2 * alg.Q - alg.n
    result = analysis.ce_criterion(alg, N, cov, _lambda_grid(args, 1e-3, 1.0), cfg.series)
    return Outcome({"covector": cov.to_dict(), "criterion": result.to_dict()})


def cmd_ce_search(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    alg = res.algebra
    if args.N is None:
        raise InputError("--N is required")
    found = analysis.ce_search_violation(
        alg,
        args.N,
        n_samples=args.samples or 10_000,
        seed=args.seed,
        lambda_grid=_lambda_grid(args, 1e-3, 1.0),
        workers=args.workers,
        progress=args.progress,
        cfg=cfg.series,
    )
    return Outcome({
        "N": args.N,
        "violation": None if found is None else found.to_dict(),
        "status": "no violation found" if found is None else "violation found",
        "domain_check": "proxy",
    })


# --- verify -----------------------------------------------------------------------------------


@dataclass
class PropertyCheck:
    name: str
    status: str  # pass | fail | skip
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "status": self.status, "detail": self.detail}


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _unit_covectors(alg: StepTwoAlgebra, seed: int, count: int) -> list[Covector]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 5)))
    xi, mu = gaussian_covectors(rng, alg, count)
    norms = np.linalg.norm(np.hstack([xi, mu]), axis=1)[:, None]
    return covector_rows(alg, xi / norms, mu / norms)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def verify_group(res: catalog.ResolvedGroup, seed: int, count: int, cfg: RunConfig, progress: bool = False) -> list[PropertyCheck]:
    """Invariant suite on one group; sizes are kept small enough for a quick run."""
    alg = res.algebra
    covs = _unit_covectors(alg, seed, count)
    checks: list[PropertyCheck] = []

    diag = validate(alg)
    checks.append(PropertyCheck("structure", _status(diag.valid), diag.to_dict()))

    report = gamma.group_exponents(alg, n_samples=64, seed=seed, rank_tol=cfg.rank_tol, progress=progress)
    known = res.known()
    if known is None:
        checks.append(PropertyCheck("exponent_chain", _status(report.chain_holds()), report.to_dict()))
    else:
        ok = report.gamma_group == known.gamma_group and report.gamma_hat_lower == known.gamma_hat_lower
        checks.append(PropertyCheck(
            "exponents_match_closed_form",
            _status(ok),
            {"sampled": [report.gamma_group, report.gamma_hat_lower], "closed_form": [known.gamma_group, known.gamma_hat_lower]},
        ))

    worst = 0.0
    for cov in covs:
        lam = 0.3 + 1.2 * float(np.abs(cov.xi[0]))
        worst = max(
            worst,
            expmap.jacobian_homogeneity(alg, cov, lam, cfg.series).rel_error,
            expmap.jacobian_eta_identity(alg, cov, lam, cfg.series).rel_error,
        )
        lhs = expmap.sexp(alg, expmap.eta(lam, cov), cfg.series).as_vector()
        rhs = expmap.dilate(lam, expmap.sexp(alg, cov, cfg.series)).as_vector()
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / max(1.0, float(np.max(np.abs(rhs)))))
    # determinants of groups with gamma > 0 lose digits to cancellation
    tol = 1e-9 if report.gamma_group == 0 else 1e-7
    checks.append(PropertyCheck("homogeneity", _status(worst < tol), {"worst_rel_error": worst, "tolerance": tol}))

    worst = 0.0
    for cov in covs:
        D = expmap.dsexp(alg, cov, cfg.series)
        F = expmap.dsexp(alg, cov, cfg.series, method="finite-difference")
        worst = max(worst, float(np.max(np.abs(D - F))) / max(1.0, float(np.max(np.abs(D)))))
    checks.append(PropertyCheck("dsexp_vs_finite_difference", _status(worst < 1e-6), {"worst_error": worst}))

    end_err = drift = 0.0
    for cov in covs[:5]:
        traj = flow.integrate(alg, cov)
        ref = expmap.sexp(alg, cov, cfg.series)
        end_err = max(end_err, flow.EndpointComparison(traj.endpoint(), ref).error)
        drift = max(drift, flow.check_conservation(alg, traj).max_drift())
    checks.append(PropertyCheck(
        "flow_vs_sexp", _status(end_err < 1e-8 and drift < 1e-8), {"endpoint_error": end_err, "max_drift": drift}
    ))

    fast = flow.with_frequency(alg, covs[0])
    order = flow.convergence_order(alg, fast, expmap.sexp(alg, fast, cfg.series))
    checks.append(PropertyCheck("rk4_order", _status(min(order.ratios) >= 12.0), order.to_dict()))

    mismatches: list[dict[str, Any]] = []
    tested = 0
    for cov in covs:
        order = gamma.gamma_point(alg, cov, cfg.rank_tol)
        if order is gamma.INFINITE:
            continue
        tested += 1
        try:
            est = analysis.leading_order(alg, cov, cfg=cfg.series).gamma_est
        except AmbiguousOrderError as e:
            est = f"ambiguous ({e.slope:.3f})"
        if est != order:
            mismatches.append({"covector": cov.to_dict(), "gamma_point": order, "leading_order": est})
    checks.append(PropertyCheck(
        "filtration_vs_leading_order", _status(not mismatches), {"tested": tested, "mismatches": mismatches}
    ))

    worst_det = 0.0
    min_eig = math.inf
    used = 0
    for cov in covs:
        try:
            az = gamma.a_zero(alg, cov, cfg.rank_tol)
            gram = gamma.hilbert_gram(alg, cov, cfg.rank_tol)
        except DegenerateCovectorError:
            continue
        used += 1
        worst_det = max(worst_det, _rel(az.det, az.product_det))
        min_eig = min(min_eig, gram.min_eigenvalue)
    checks.append(PropertyCheck(
        "a_zero_product_formula",
        _status(used > 0 and worst_det < 1e-9 and min_eig > 0),
        {"covectors": used, "worst_rel_error": worst_det, "min_gram_eigenvalue": min_eig},
    ))

    if res.ga is not None:
        A = res.ga
        worst = 0.0
        for cov in covs:
            if catalog.ga_in_box(A, cov):
                worst = max(worst, _rel(catalog.ga_jacobian(A, cov), expmap.jacobian(alg, cov, cfg.series)))
        checks.append(PropertyCheck("ga_closed_form_jacobian", _status(worst < 1e-9), {"worst_rel_error": worst}))

        rng = np.random.default_rng(np.random.SeedSequence((seed, 6)))
        B = rng.standard_normal((A.k, A.m))
        resid = catalog.cauchy_binet_check(A.entries, B)
        checks.append(PropertyCheck("cauchy_binet", _status(resid < 1e-12 * max(1.0, abs(np.linalg.det(A.entries @ B)))), {"residual": resid}))

        mono = catalog.f1_monotone_check()
        checks.append(PropertyCheck(
            "f1_f2_monotone", _status(mono.passed), {"f1_slack": mono.f1_slack, "f2_slack": mono.f2_slack}
        ))
    return checks


def cmd_verify(res: catalog.ResolvedGroup, args: argparse.Namespace, cfg: RunConfig) -> Outcome:
    checks = verify_group(res, args.seed, args.samples or 12, cfg, args.progress)
    for c in checks:
        print(f"{c.status.upper():4}  {c.name}", file=sys.stderr)
    failed = [c.name for c in checks if c.status == "fail"]
    return Outcome({"checks": [c.to_dict() for c in checks], "failed": failed}, exit_code=1 if failed else 0)


# --- parser -----------------------------------------------------------------------------------


def build_parser(defaults: RunConfig | None = None) -> argparse.ArgumentParser:
    defaults = defaults or get_run_config()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", default="heisenberg", help="heisenberg | free:k | star:k | ga:<file> | <spec.json>")
    common.add_argument("--seed", type=int, default=defaults.seed, help="Base seed (default CARNOT_SEED).")
    common.add_argument("--workers", type=int, default=defaults.workers, help="Worker threads for sampling loops.")
    common.add_argument("--samples", type=int, default=None, help="Sample budget (command-specific default).")
    common.add_argument("--out", choices=("json", "csv"), default="json")
    common.add_argument("--progress", action="store_true", help="Show progress bars on stderr.")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging.")

    cov = argparse.ArgumentParser(add_help=False)
    cov.add_argument("--xi", type=_floats, default=None, help="First-layer covector, comma separated.")
    cov.add_argument("--mu", type=_floats, default=None, help="Second-layer covector (default 0).")

    lam = argparse.ArgumentParser(add_help=False)
    lam.add_argument("--lambda-min", type=float, default=None)
    lam.add_argument("--lambda-max", type=float, default=None)
    lam.add_argument("--grid", type=_floats, default=None, help="Explicit lambda values, comma separated.")

    parser = argparse.ArgumentParser(prog="carnot", description="Step-two Carnot group exponents.")
    parser.add_argument("--manifest", default=None, help="Replay the run recorded in a previous output.")
    sub = parser.add_subparsers(dest="command")

    def add(name: str, func: Callable[..., Outcome], help_text: str, parents: Sequence[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common, *parents])
        p.set_defaults(func=func)
        return p

    add("info", cmd_info, "Dimensions and structure diagnostics.", [])
    add("sexp", cmd_sexp, "Exponential map at a covector.", [cov])
    p = add("jacobian", cmd_jacobian, "Differential and Jacobian of SExp.", [cov])
    p.add_argument("--method", choices=("series", "finite-difference"), default="series")
    p = add("flow", cmd_flow, "RK4 geodesic flow with conservation drifts.", [cov])
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--step", type=float, default=flow.DEFAULT_STEP)
    p = add("filtration", cmd_filtration, "Krylov filtration and a(0) at a covector.", [cov])
    p.add_argument("--bases", action="store_true", help="Include orthonormal bases.")
    p = add("exponents", cmd_exponents, "Gamma(G), Gamma-hat lower bound, N_GEO, N_CE lower bound.", [])
    p.add_argument("--strata", default="auto", help="auto | none | JSON file of masks and covectors.")
    p = add("leading-order", cmd_leading_order, "Order of vanishing of the scaled Jacobian.", [cov, lam])
    p.add_argument("--floor", type=float, default=analysis.DEFAULT_FLOOR)
    p = add("volume-scan", cmd_volume_scan, "Intermediate-set volumes and their log-log slope.", [lam])
    p.add_argument("--region", type=_region, default=None, help="Covector box lo:hi,... (n sides).")
    p = add("ce-check", cmd_ce_check, "Curvature-exponent inequality at one covector.", [cov, lam])
    p.add_argument("--N", type=float, default=None, help="Exponent to test (default 2Q - n).")
    p = add("ce-search", cmd_ce_search, "Search for a violation of the curvature-exponent inequality.", [lam])
    p.add_argument("--N", type=float, default=None)
    add("verify", cmd_verify, "Run the invariant suite on a group.", [])
    return parser


def _params(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in _UNRECORDED:
            continue
        if isinstance(v, analysis.CovectorBox):
            v = v.to_dict()
        out[k] = v
    return out


def _has_seed(argv: Sequence[str]) -> bool:
    return any(a == "--seed" or a.startswith("--seed=") for a in argv)


def run(argv: Sequence[str] | None = None, stdout: Any = None, cfg: RunConfig | None = None) -> int:
    """Run one command. cfg overrides the environment; a manifest replay passes the recorded one."""
    stdout = stdout or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg = cfg or get_run_config()
    parser = build_parser(cfg)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        if args.manifest:
            recorded = load_manifest(args.manifest)
            replay = [str(a) for a in recorded["argv"]]
            if "--manifest" in replay:
                raise InputError("a manifest cannot replay another manifest")
            recorded_cfg = RunConfig.from_dict(recorded["config"]) if "config" in recorded else None
            return run(replay, stdout, recorded_cfg)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 2

        cfg = replace(cfg, seed=args.seed, workers=max(1, args.workers))
        start = time.perf_counter()
        res = catalog.resolve(args.group)
        outcome: Outcome = args.func(res, args, cfg)
        manifest = RunManifest(
            command=args.command,
            group=args.group,
            params=_params(args),
            seed=args.seed,
            argv=argv if _has_seed(argv) else [*argv, "--seed", str(args.seed)],
            config=cfg.to_dict(),
            wall_time=time.perf_counter() - start,
        )
        if outcome.frame is not None:
            stdout.write("# " + json.dumps({"schema": SCHEMA, "manifest": manifest.to_dict()}) + "\n")
            outcome.frame.to_csv(stdout, index=False, float_format="%.17g")
        else:
            stdout.write(dumps({"schema": SCHEMA, "manifest": manifest.to_dict(), "result": outcome.result}) + "\n")
        return outcome.exit_code
    except InputError as e:
        logger.error("%s", e)
        return 2
    except ConvergenceError as e:
        logger.error("%s", e)
        return 3
    except CarnotError as e:
        logger.error("%s", e)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
