"""Epsilon sweeps, rate fits and the top-level verification reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capacity import sphere_area
from .geometry import (
    DomainSpec,
    ObstacleSpec,
    circumradius,
    geometry_constants,
    parse_shape,
    scale_obstacle,
)
from .heatkernel import HeatKernel, fit_php_constants, php_deficit
from .mesh import active_measure, build_mesh
from .operators import assemble
from .radial_oracle import ball_neumann_mode, oracle_point
from .solvers import smallest_eigenpair, solve_torsion

log = logging.getLogger(__name__)

CSV_HEADER = ("epsilon", "h", "lambda", "sup_u", "product", "lemma1_scaled", "runtime_s", "path")
PATHS = ("grid", "oracle", "both")
# allowed shortfall of lambda * sup u below 1, per path; the grid value is
# 5 (h / (eps R_K))^2 at the default resolution eps R_K / 8
PATH_TOLERANCE = {"oracle": 1e-9, "grid": 5.0 / 64}


class ExperimentError(ValueError):
    pass


@dataclass
class SweepConfig:
    dimension: int
    domain: DomainSpec
    obstacle: ObstacleSpec
    epsilons: list[float]
    h_rule: str | float = "eps/8"  # "eps/k": h = eps R_K / k; a number: fixed h
    path: str = "oracle"
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.path not in PATHS:
            raise ExperimentError(f"path must be one of {PATHS}, got {self.path!r}")
        if self.domain.dimension != self.dimension or self.obstacle.dimension != self.dimension:
            raise ExperimentError("shape dimensions do not match the configured dimension")
        eps = [float(e) for e in self.epsilons]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ExperimentError("epsilon list must be strictly decreasing")
        if eps:
            eps1 = geometry_constants(self.domain, self.obstacle).eps1
            if eps[0] > eps1 or eps[-1] <= 0:
                raise ExperimentError(f"epsilons must lie in (0, {eps1}]")
        self.epsilons = eps

    def grid_h(self, eps: float) -> float:
        if isinstance(self.h_rule, (int, float)):
            return float(self.h_rule)
        rule = self.h_rule.replace(" ", "")
        if not rule.startswith("eps/"):
            raise ExperimentError(f"unknown h rule {self.h_rule!r}")
        return eps * circumradius(self.obstacle) / float(rule[4:])

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        raw = json.loads(text)
        return cls(
            dimension=int(raw["dimension"]),
            domain=parse_shape(raw["domain"]),
            obstacle=parse_shape(raw["obstacle"], obstacle=True),
            epsilons=list(raw.get("epsilons", [])),
            h_rule=raw.get("h_rule", "eps/8"),
            path=raw.get("path", "oracle"),
            tolerances=dict(raw.get("tolerances", {})),
            out=raw.get("out"),
            workers=int(raw.get("workers", 1)),
        )


@dataclass
class SweepRow:
    epsilon: float
    h: float
    lam: float
    sup_u: float
    product: float
    lemma1_scaled: float
    runtime_s: float
    path: str
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None or not math.isfinite(self.product)


def lemma1_scaling(eps: float, m: int) -> float:
    """ln(1/eps) for m = 2, eps^{2-m} otherwise."""
    return math.log(1.0 / eps) if m == 2 else eps ** (2 - m)


def _concentric_radii(cfg: SweepConfig, eps: float):
    D, K = cfg.domain, cfg.obstacle
    if D.kind not in ("disk", "ball") or K.kind not in ("disk", "ball") or any(D.center) or any(K.center):
        raise ExperimentError("the oracle path needs a ball obstacle centred in a ball domain")
    return eps * K.lengths[0], D.lengths[0]


def _grid_point(cfg: SweepConfig, eps: float):
    tol = cfg.tolerances
    h = cfg.grid_h(eps)
    mesh = build_mesh(cfg.domain, scale_obstacle(cfg.obstacle, eps), h)
    A = assemble(mesh)
    u = solve_torsion(A, mesh, tol=tol.get("cg", 1e-10))
    lam = smallest_eigenpair(A, mesh, tol=tol.get("eigen", 1e-8), x0=u.values).value
    return h, lam, u.sup_norm


def _oracle_point(cfg: SweepConfig, eps: float):
    inner, outer = _concentric_radii(cfg, eps)
    lam, sup, _ = oracle_point(cfg.dimension, inner, outer, N=int(cfg.tolerances.get("oracle_N", 4000)))
    return 0.0, lam, sup


def _run_point(cfg: SweepConfig, eps: float, path: str) -> SweepRow:
    start = time.perf_counter()
    try:
        h, lam, sup = (_grid_point if path == "grid" else _oracle_point)(cfg, eps)
    except Exception as exc:  # failures are recorded per row, not raised
        log.warning("%s point eps=%g failed: %s", path, eps, exc)
        nan = float("nan")
        return SweepRow(eps, nan, nan, nan, nan, nan, time.perf_counter() - start, path, str(exc))
    return SweepRow(
        epsilon=eps,
        h=h,
        lam=lam,
        sup_u=sup,
        product=lam * sup,
        lemma1_scaled=lemma1_scaling(eps, cfg.dimension) * lam,
        runtime_s=time.perf_counter() - start,
        path=path,
    )


def run_sweep(cfg: SweepConfig) -> list[SweepRow]:
    """One row per epsilon (two with path "both"), ordered by epsilon."""
    paths = ("grid", "oracle") if cfg.path == "both" else (cfg.path,)
    jobs = [(eps, p) for eps in cfg.epsilons for p in paths]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda job: _run_point(cfg, *job), jobs))
    else:
        rows = [_run_point(cfg, *job) for job in jobs]
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows


def _fmt(v) -> str:
    return v if isinstance(v, str) else "%.17g" % v


def write_csv(rows, path) -> None:
    """Write rows to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_rows(rows, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(rows, fh)


def _write_rows(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(v) for v in (r.epsilon, r.h, r.lam, r.sup_u, r.product, r.lemma1_scaled, r.runtime_s, r.path)])


def read_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ExperimentError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            vals = [float(v) for v in rec[:7]]
            rows.append(SweepRow(*vals, path=rec[7]))
    return rows


@dataclass(frozen=True)
class RateFit:
    model: str  # "power" (in eps) or "inverse-log" (in 1/ln(1/eps))
    C: float
    p: float
    residual: float  # RMS of the log residuals
    points: int


def fit_rate(rows, model: str) -> RateFit:
    """Fit product - 1 = C eps^p (power) or C (ln 1/eps)^{-p} (inverse-log)."""
    if model not in ("power", "inverse-log"):
        raise ExperimentError(f"unknown rate model {model!r}")
    usable = [r for r in rows if math.isfinite(r.product) and r.product > 1]
    if len(usable) < len([r for r in rows if math.isfinite(r.product)]):
        log.warning("rate fit: rows with product <= 1 excluded")
    if len(usable) < 4:
        raise ExperimentError(f"rate fit needs at least 4 rows with product > 1, got {len(usable)}")
    eps = np.array([r.epsilon for r in usable])
    y = np.log(np.array([r.product for r in usable]) - 1.0)
    x = np.log(eps) if model == "power" else np.log(np.log(1.0 / eps))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    p = slope if model == "power" else -slope
    return RateFit(model, float(math.exp(intercept)), float(p), float(np.sqrt(np.mean(resid**2))), len(usable))


@dataclass
class Report:
    name: str
    checks: dict[str, bool]
    details: dict = field(default_factory=dict)
    expected_failures: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def unexpected_failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok and k not in self.expected_failures]

    def lines(self) -> list[str]:
        out = []
        for k, ok in self.checks.items():
            tag = "PASS" if ok else ("FAIL (expected)" if k in self.expected_failures else "FAIL")
            out.append(f"{self.name} {k}: {tag}")
        out += [f"  {k} = {v}" for k, v in self.details.items()]
        return out


def verify_theorem1(rows, m: int, exponent_floor: float = 0.5, max_residual: float = 0.10) -> Report:
    """(a) lambda sup u >= 1 - tol, (b) products decrease to 1, (c) decay exponent floor."""
    rows = sorted((r for r in rows if not r.failed), key=lambda r: -r.epsilon)
    if len(rows) < 4:
        raise ExperimentError("theorem check needs at least 4 rows")
    prods = np.array([r.product for r in rows])
    lower_ok = all(r.product >= 1 - PATH_TOLERANCE.get(r.path, 1e-9) for r in rows)
    dist = np.abs(prods - 1.0)
    monotone = bool(np.all(np.diff(dist) < 0))
    details = {"products": prods.tolist()}
    try:
        fit = fit_rate(rows, "inverse-log" if m == 2 else "power")
        rate_ok = fit.p >= exponent_floor and fit.residual < max_residual
        details["fit"] = fit
    except ExperimentError as exc:
        rate_ok = False
        details["fit"] = str(exc)
    return Report("theorem1", {"(a) lower bound": lower_ok, "(b) monotone limit": monotone, "(c) rate": rate_ok}, details)


def verify_lemma1(rows, m: int, capK: float | None, volD: float, attained: bool = True) -> Report:
    """Extrapolate lemma1_scaled to eps -> 0 and compare with cap(K)/|D| (2 pi/|D| for m = 2).

    Model L (1 + a / ln(1/eps)) for m = 2 and L (1 + a eps) for m >= 3, fitted
    as a straight line in 1/ln(1/eps) or eps.
    """
    rows = [r for r in rows if not r.failed]
    if len(rows) < 3:
        raise ExperimentError("lemma check needs at least 3 rows")
    target = 2 * math.pi / volD if m == 2 else capK / volD
    eps = np.array([r.epsilon for r in rows])
    x = 1.0 / np.log(1.0 / eps) if m == 2 else eps
    y = np.array([r.lemma1_scaled for r in rows])
    slope, L = np.polyfit(x, y, 1)
    checks = {"upper limit": bool(L <= 1.02 * target)}
    if attained:
        checks["limit attained"] = bool(abs(L / target - 1.0) <= 0.05)
    return Report("lemma1", checks, {"L": float(L), "target": target, "raw_last": float(y[np.argmin(eps)])})


def _ball_volume(m: int, R: float = 1.0) -> float:
    return sphere_area(m) / m * R**m


def verify_prop1(D: DomainSpec, h: float) -> Report:
    """Connectivity, simple zero eigenvalue and the two bounds on mu(D).

    Everything uses the discrete domain: mu(D) and |D| are the grid values
    (|D| is the total node measure), against which the continuum ball value
    mu(B) is compared.
    """
    m = D.dimension
    mesh = build_mesh(D, None, h)
    A = assemble(mesh)
    hk = HeatKernel.from_operator(A, mesh)
    n_comp = mesh.components()
    zero = hk.decomposition.zero_cluster_size()
    mu = hk.decomposition.first_nonzero()
    early, late = php_deficit(hk, 1.0 / mu), php_deficit(hk, 10.0 / mu)
    decays = late < 1e-2 * early
    connected = n_comp == 1
    vol = active_measure(mesh)
    mu_ball = ball_neumann_mode(m)
    weinberger = mu_ball * (_ball_volume(m) / vol) ** (2.0 / m)
    details = {
        "components": n_comp,
        "zero_cluster": zero,
        "deficit(1/mu)": early,
        "deficit(10/mu)": late,
        "mu": mu,
        "mu_ball_rescaled": weinberger,
        "volume": vol,
    }
    c2_ok = False
    if connected:
        try:
            php = fit_php_constants(hk, np.linspace(1.0, 10.0, 19) / mu)
            details["php"] = php
            c2_ok = mu >= 0.95 * php.c2
        except Exception as exc:
            details["php"] = str(exc)
    checks = {
        "(i) connected with decaying deficit": connected and decays,
        "(ii) simple zero eigenvalue": zero == 1,
        "(iii) Weinberger and gap bounds": bool(weinberger >= mu and c2_ok),
    }
    expected = ()
    if not connected and not decays:
        # a disconnected domain must fail all three; that is the negative control
        expected = tuple(checks)
    return Report(f"prop1[{D.spec_string()}]", checks, details, expected)
