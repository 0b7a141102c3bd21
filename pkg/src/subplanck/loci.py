"""Equal-QFI loci between a photon-added proposed state and a target state,
fidelity along the solutions, and the figure datasets built from them.

For every grid point of the proposed state's free parameters the target
amplitude |beta| is solved from F_Q^target(|beta|) = F_Q^proposed. The
target QFI is screened on a fixed panel grid shared by all grid points of
one n, and each sign change is refined with Brent's method.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import metrics, phase_space
from .fock import TruncationError
from .states import PAIR_FAMILIES, PAIR_LABELS, PairSpec, StateSpec, make_state, resolve_pair

THETA_POLICIES = ("fixed", "sweep", "target-invariant")
FIGURES = ("fig1", "fig2", "fig3", "fig4")
BRACKET = (1e-3, 6.0)
PANELS = 24
SOLVER_RTOL = 1e-8
# Brent is run tighter than the advertised tolerance
BRENT_RTOL = 1e-12
REFINE = 4
THETA_SWEEP = tuple(2 * math.pi * k / 16 for k in range(16))

DEFAULT_RANGES = {
    "r": (0.0, 1.2, 0.02),
    "alpha": (0.1, 2.5, 0.05),
}
FREE_PARAMS = {
    "prstrg-1": ("r", "alpha"),
    "prstrg-2": ("r",),
    "prstrg-3": ("r",),
    "trgtrgn-1": ("alpha",),
    "trgtrgp-2": ("alpha",),
    "trgtrgE-3": ("alpha",),
}
# (beta phase, theta): the generator is aligned with the target's lobe axis
PAIR_DEFAULTS = {
    "prstrg-1": (complex(math.cos(math.pi / 4), math.sin(math.pi / 4)), math.pi / 4),
    "prstrg-2": (1 + 0j, 0.0),
    "prstrg-3": (1j, math.pi / 2),
    "trgtrgn-1": (complex(math.cos(math.pi / 4), math.sin(math.pi / 4)), math.pi / 4),
    "trgtrgp-2": (1 + 0j, 0.0),
    "trgtrgE-3": (1 + 0j, 0.0),
}


class SolverError(RuntimeError):
    """Raised when a locus cannot be solved at all."""


def worker_count() -> int:
    """Worker cap from SUBPLANCK_THREADS (default 1)."""
    raw = os.environ.get("SUBPLANCK_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"SUBPLANCK_THREADS must be an integer, not {raw!r}") from None
    return max(1, value)


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid, rounded to 12 digits to keep CSVs clean."""
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 12)


@dataclass(frozen=True)
class LocusConfig:
    pair: str
    n_values: tuple = (0, 1, 2, 3, 4)
    free_params: dict | None = None
    theta_policy: str = "fixed"
    theta: float | None = None
    theta_grid: tuple = THETA_SWEEP
    convention: str = "appendix"
    beta_phase: complex | None = None
    source_l: int = 0
    bracket: tuple = BRACKET
    panels: int = PANELS

    def __post_init__(self):
        if self.pair not in PAIR_LABELS:
            raise ValueError(f"unknown pair {self.pair!r}")
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.n_values or min(self.n_values) < 0:
            raise ValueError("n_values must be a nonempty list of integers >= 0")
        names = FREE_PARAMS[self.pair]
        ranges = dict(self.free_params or {})
        unknown = set(ranges) - set(names)
        if unknown:
            raise ValueError(f"{self.pair} has no free parameters {sorted(unknown)}")
        full = {}
        for name in names:
            lo, hi, step = (float(v) for v in ranges.get(name, DEFAULT_RANGES[name]))
            if not step > 0:
                raise ValueError(f"step for {name} must be > 0")
            if hi < lo:
                raise ValueError(f"range for {name} is empty")
            if lo < 0:
                raise ValueError(f"{name} must be >= 0")
            full[name] = (lo, hi, step)
        object.__setattr__(self, "free_params", full)
        if self.theta_policy not in THETA_POLICIES:
            raise ValueError(f"theta_policy must be one of {THETA_POLICIES}")
        metrics.convention_factor(self.convention)
        phase, theta = PAIR_DEFAULTS[self.pair]
        if self.beta_phase is None:
            object.__setattr__(self, "beta_phase", phase)
        bp = complex(self.beta_phase)
        if abs(abs(bp) - 1.0) > 1e-12:
            raise ValueError("beta_phase must be a unit complex number")
        object.__setattr__(self, "beta_phase", bp)
        if self.theta is None:
            object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        if not self.theta_grid:
            raise ValueError("theta_grid must be nonempty")
        lo, hi = (float(b) for b in self.bracket)
        if not 0 < lo < hi:
            raise ValueError("bracket must satisfy 0 < lo < hi")
        object.__setattr__(self, "bracket", (lo, hi))
        if self.panels < 1:
            raise ValueError("panels must be >= 1")
        PairSpec(self.pair, 0, self.source_l)

    def grid(self) -> list[dict]:
        """Free-parameter grid points in lexicographic index order."""
        names = list(self.free_params)
        axes = [grid_values(*self.free_params[name]) for name in names]
        return [dict(zip(names, map(float, combo))) for combo in itertools.product(*axes)]

    def thetas(self) -> tuple:
        return self.theta_grid if self.theta_policy == "sweep" else (self.theta,)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["beta_phase"] = [self.beta_phase.real, self.beta_phase.imag]
        data["free_params"] = {k: list(v) for k, v in self.free_params.items()}
        data["n_values"] = list(self.n_values)
        data["theta_grid"] = list(self.theta_grid)
        data["bracket"] = list(self.bracket)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "LocusConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown LocusConfig fields: {sorted(extra)}")
        data = dict(data)
        bp = data.get("beta_phase")
        if isinstance(bp, (list, tuple)):
            data["beta_phase"] = complex(bp[0], bp[1])
        for key in ("n_values", "theta_grid", "bracket"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class LocusPoint:
    n: int
    params: dict
    beta: float
    fq: float
    theta: float = 0.0
    residual: float = 0.0
    multiplicity: int = 1
    fidelity: float = float("nan")
    mean_n_proposed: float = float("nan")
    mean_n_target: float = float("nan")
    flagged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LocusResult:
    """Solved points plus the grid cells for which no bracket exists."""

    config: LocusConfig
    points: list = field(default_factory=list)
    omitted: list = field(default_factory=list)
    monotone: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def omitted_count(self) -> int:
        return len(self.omitted)

    def for_n(self, n: int) -> list:
        return [p for p in self.points if p.n == n]


class TargetCurve:
    """F_Q of the target family as a function of |beta| at fixed n and theta."""

    def __init__(self, cfg: LocusConfig, pair: PairSpec, theta: float):
        self.cfg, self.pair, self.theta = cfg, pair, theta
        self._cache: dict = {}

    def spec(self, beta: float) -> StateSpec:
        return resolve_pair(self.pair, beta=beta, beta_phase=self.cfg.beta_phase)[1]

    def __call__(self, beta: float) -> float:
        key = float(beta)
        if key not in self._cache:
            psi = make_state(self.spec(key))
            self._cache[key] = metrics.qfi_displacement(psi, self.theta, self.cfg.convention)
        return self._cache[key]

    def screen(self) -> tuple[np.ndarray, np.ndarray, bool]:
        """Panel nodes and values; non-monotone panels are subdivided."""
        lo, hi = self.cfg.bracket
        nodes = np.linspace(lo, hi, self.cfg.panels + 1)
        values = np.array([self(b) for b in nodes])
        diffs = np.diff(values)
        monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
        if not monotone:
            fine = np.linspace(lo, hi, REFINE * self.cfg.panels + 1)
            nodes, values = fine, np.array([self(b) for b in fine])
        return nodes, values, monotone


def _roots(curve: TargetCurve, nodes, values, level: float) -> list[float]:
    g = values - level
    roots = []
    for i in range(len(nodes) - 1):
        if g[i] == 0.0:
            roots.append(float(nodes[i]))
        elif g[i] * g[i + 1] < 0:
            root = brentq(lambda b: curve(b) - level, nodes[i], nodes[i + 1],
                          xtol=1e-14, rtol=BRENT_RTOL)
            roots.append(float(root))
    if g[-1] == 0.0:
        roots.append(float(nodes[-1]))
    return roots


def _proposed_spec(cfg: LocusConfig, pair: PairSpec, params: dict) -> StateSpec:
    return resolve_pair(pair, r=params.get("r", 0.0), alpha=params.get("alpha", 0.0),
                        beta_phase=cfg.beta_phase)[0]


def _check_theta_policy(cfg: LocusConfig, curve: TargetCurve, nodes):
    """target-invariant: the target QFI must not depend on theta."""
    probe = [float(nodes[len(nodes) // 3]), float(nodes[-1])]
    for b in probe:
        psi = make_state(curve.spec(b))
        vals = [metrics.qfi_displacement(psi, t, cfg.convention) for t in THETA_SWEEP]
        if max(vals) - min(vals) > 1e-8 * max(abs(v) for v in vals):
            raise ValueError(f"target of {cfg.pair} is theta-dependent; "
                             "use the fixed or sweep policy")


def solve_equal_qfi(cfg: LocusConfig, workers: int | None = None) -> LocusResult:
    """Solve F_Q^target(|beta|) = F_Q^proposed on every grid point and n."""
    workers = worker_count() if workers is None else max(1, workers)
    result = LocusResult(cfg)
    grid = cfg.grid()
    for n in cfg.n_values:
        pair = PairSpec(cfg.pair, n, cfg.source_l)
        for theta in cfg.thetas():
            curve = TargetCurve(cfg, pair, theta)
            nodes, values, monotone = curve.screen()
            if cfg.theta_policy == "target-invariant":
                _check_theta_policy(cfg, curve, nodes)
            result.monotone[(n, theta)] = monotone

            def task(params, pair=pair, theta=theta):
                psi = make_state(_proposed_spec(cfg, pair, params))
                return metrics.qfi_displacement(psi, theta, cfg.convention)

            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    levels = list(pool.map(task, grid))
            else:
                levels = [task(p) for p in grid]
            for params, level in zip(grid, levels):
                roots = _roots(curve, nodes, values, level)
                if not roots:
                    result.omitted.append({"n": n, "theta": theta, **params, "fq": level})
                    continue
                for beta in roots:
                    residual = abs(curve(beta) - level)
                    result.points.append(LocusPoint(
                        n=n, params=dict(params), beta=beta, fq=level, theta=theta,
                        residual=residual, multiplicity=len(roots),
                    ))
    return result


def fidelity_sweep(points, cfg: LocusConfig) -> list:
    """Fill fidelity and both mean photon numbers at matched cutoff."""
    out = []
    for pt in points:
        pair = PairSpec(cfg.pair, pt.n, cfg.source_l)
        proposed, target = resolve_pair(pair, r=pt.params.get("r", 0.0),
                                        alpha=pt.params.get("alpha", 0.0),
                                        beta=pt.beta, beta_phase=cfg.beta_phase)
        try:
            psi_p, psi_t = make_state(proposed), make_state(target)
            cutoff = max(psi_p.cutoff, psi_t.cutoff)
            psi_p, psi_t = psi_p.resized(cutoff), psi_t.resized(cutoff)
            fid = metrics.fidelity(psi_t, psi_p)
            mean_p = metrics.mean_photon(psi_p)[0]
            mean_t = metrics.mean_photon(psi_t)[0]
            out.append(replace(pt, fidelity=fid, mean_n_proposed=mean_p, mean_n_target=mean_t))
        except TruncationError:
            out.append(replace(pt, flagged=True))
    return out


def fidelity_maximum(points, n: int) -> LocusPoint | None:
    """Locus point of largest fidelity at photon number n."""
    cands = [p for p in points if p.n == n and math.isfinite(p.fidelity)]
    return max(cands, key=lambda p: p.fidelity) if cands else None


# --- figure datasets -------------------------------------------------------


@dataclass(frozen=True)
class FringeConfig:
    """Central fringe areas of one family over amplitudes and photon additions."""

    family: str = "cat"
    betas: tuple = (2.0,)
    n_adds: tuple = (0, 1, 2)
    l: int = 0
    n_directions: int = 64
    search_radius: float = phase_space.SEARCH_RADIUS
    source: str = "overlap"

    def __post_init__(self):
        if self.family not in ("cat", "ks_plus", "ks_minus"):
            raise ValueError("fig1 covers cat and compass states only")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "n_adds", tuple(int(k) for k in self.n_adds))
        if not self.betas or not self.n_adds:
            raise ValueError("betas and n_adds must be nonempty")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["betas"], data["n_adds"] = list(self.betas), list(self.n_adds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "FringeConfig":
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown FringeConfig fields: {sorted(extra)}")
        return cls(**data)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header: list, rows: list):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def fig1_rows(cfg: FringeConfig) -> list:
    rows = []
    for beta in cfg.betas:
        for k in cfg.n_adds:
            spec = StateSpec(cfg.family, beta=beta, l=cfg.l, n_add=k)
            psi = make_state(spec)
            rep = phase_space.fringe_report(psi, cfg.n_directions, cfg.search_radius, cfg.source)
            r_imag = phase_space.first_zero(psi, math.pi / 2, cfg.search_radius, cfg.source)
            rows.append([beta, k, rep.cfa, rep.zero_fraction,
                         float("nan") if r_imag is None else r_imag])
    return rows


FIG1_HEADER = ["beta", "n_add", "cfa", "zero_fraction", "first_zero_imag"]


def locus_header(cfg: LocusConfig, which: str) -> list:
    head = ["n"]
    if cfg.theta_policy == "sweep":
        head.append("theta")
    head += list(cfg.free_params) + ["beta", "fq", "fidelity"]
    if which == "fig4":
        head += ["mean_n_proposed", "mean_n_target"]
    return head


def locus_rows(points, cfg: LocusConfig, which: str) -> list:
    rows = []
    for pt in points:
        row = [pt.n]
        if cfg.theta_policy == "sweep":
            row.append(pt.theta)
        row += [pt.params[name] for name in cfg.free_params]
        row += [pt.beta, pt.fq, pt.fidelity]
        if which == "fig4":
            row += [pt.mean_n_proposed, pt.mean_n_target]
        rows.append(row)
    return rows


def emit_figure_dataset(cfg, which: str, outdir, extra_manifest: dict | None = None) -> dict:
    """Write ``<which>.csv`` and ``<which>.json`` under ``outdir``.

    ``cfg`` is a :class:`FringeConfig` for fig1 and a :class:`LocusConfig`
    otherwise. Returns the manifest.
    """
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"figure": which, "config": cfg.to_dict(), "config_hash": cfg.digest()}
    if which == "fig1":
        if not isinstance(cfg, FringeConfig):
            raise TypeError("fig1 needs a FringeConfig")
        header, rows = FIG1_HEADER, fig1_rows(cfg)
        manifest.update(family=cfg.family, rows=len(rows), cfa_source=cfg.source)
    else:
        if not isinstance(cfg, LocusConfig):
            raise TypeError(f"{which} needs a LocusConfig")
        result = solve_equal_qfi(cfg)
        points = fidelity_sweep(result.points, cfg)
        header, rows = locus_header(cfg, which), locus_rows(points, cfg, which)
        residuals = [p.residual / max(abs(p.fq), 1e-300) for p in points]
        manifest.update(
            pair=cfg.pair,
            families=list(PAIR_FAMILIES[cfg.pair]),
            convention=cfg.convention,
            theta_policy=cfg.theta_policy,
            theta=cfg.theta if cfg.theta_policy != "sweep" else list(cfg.theta_grid),
            beta_phase=[cfg.beta_phase.real, cfg.beta_phase.imag],
            beta_phase_arg=math.atan2(cfg.beta_phase.imag, cfg.beta_phase.real),
            rows=len(rows),
            omitted_count=result.omitted_count,
            omitted=result.omitted,
            multiple_roots=sum(1 for p in points if p.multiplicity > 1),
            flagged=sum(1 for p in points if p.flagged),
            max_relative_residual=max(residuals, default=0.0),
            monotone_target={f"n={n},theta={t:.17g}": m for (n, t), m in result.monotone.items()},
            cutoff_policy="per-state smallest ladder cutoff with guard-band weight below 1e-10; "
                          "fidelity at the larger of the two",
        )
    if extra_manifest:
        manifest.update(extra_manifest)
    manifest["columns"] = header
    _write_csv(outdir / f"{which}.csv", header, rows)
    (outdir / f"{which}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
