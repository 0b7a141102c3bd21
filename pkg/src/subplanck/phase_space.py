"""Wigner function, displacement self-overlap and central fringe area.

Displacements along a ray are handled through the eigendecomposition of the
truncated generator i(a^dag - a): D[t] = V exp(-i t lam) V^dag is the same
exponential of the truncated generator that :func:`fock.build_operator`
computes densely, but lets a whole radial scan cost O(N) per point.
Arbitrary directions use D[t e^{i theta}] = R(theta) D[t] R(theta)^dag with
the diagonal rotation R(theta) = exp(i theta n).
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.optimize import brentq, minimize_scalar

from . import fock
from .fock import DEFAULT_EPS, FockVector, TruncationError

ZERO_THRESHOLD = 1e-10
RADIUS_RTOL = 1e-6
SEARCH_RADIUS = 3.0
MIN_ZERO_FRACTION = 0.9
# adaptive bisection between uniform directions in fringe_report
REFINE_DEPTH = 8
REFINE_TOL = 1e-4


@lru_cache(maxsize=16)
def _ray_kernel(cutoff: int):
    a = fock.annihilation_matrix(cutoff)
    herm = 1j * (a.conj().T - a)
    lam, vecs = scipy.linalg.eigh(herm)
    return lam, vecs


def _check_state(psi: FockVector, eps: float):
    if psi.flagged(eps):
        raise TruncationError(f"state is flagged (tail {psi.tail_mass:.3g})")


def working_cutoff(psi: FockVector, radius: float) -> int:
    """Cutoff large enough that psi displaced by up to ``radius`` stays resolved."""
    probs = psi.probabilities()
    mean = float(np.arange(psi.dim) @ probs / probs.sum())
    reach = math.sqrt(mean) + radius
    need = reach ** 2 + 12 * reach + 30
    cutoff = max(psi.cutoff, fock.CUTOFF_FLOOR)
    while fock.GUARD_FRACTION * cutoff < need:
        cutoff *= 2
    return cutoff


class RayEvaluator:
    """Displacements of one state along rays from the origin."""

    def __init__(self, psi: FockVector, radius: float, eps: float = DEFAULT_EPS):
        _check_state(psi, eps)
        self.psi = fock.normalize(psi)
        self.radius = radius
        self.cutoff = working_cutoff(self.psi, radius)
        self.lam, self.vecs = _ray_kernel(self.cutoff)
        self._padded = self.psi.resized(self.cutoff).amplitudes
        self._check_reach()

    def _check_reach(self):
        for theta in (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4):
            for sign in (1.0, -1.0):
                vec = self.displaced(sign * self.radius * np.exp(1j * theta))
                if fock.FockVector(vec, self.cutoff).tail_mass >= DEFAULT_EPS:
                    raise TruncationError("displaced state leaves the working cutoff")

    def _weights(self, theta: float) -> np.ndarray:
        rotated = np.exp(-1j * theta * np.arange(self.cutoff + 1)) * self._padded
        return self.vecs.conj().T @ rotated

    def displaced(self, lam: complex) -> np.ndarray:
        """Amplitudes of D[lam] psi on the working cutoff."""
        t, theta = abs(lam), np.angle(lam)
        w = self._weights(theta)
        vec = self.vecs @ (np.exp(-1j * t * self.lam) * w)
        return np.exp(1j * theta * np.arange(self.cutoff + 1)) * vec

    def characteristic(self, theta: float, radii) -> np.ndarray:
        """<psi| D[t e^{i theta}] |psi> for each t in ``radii``."""
        w = self._weights(theta)
        p = np.abs(w) ** 2
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        return np.exp(-1j * np.outer(radii, self.lam)) @ p

    def wigner_ray(self, theta: float, radii) -> np.ndarray:
        """W(t e^{i theta}) = (2/pi) <psi| D[beta] Pi D[-beta] |psi>."""
        w = self._weights(theta)
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        phases = np.exp(1j * np.outer(self.lam, radii))
        vecs = self.vecs @ (phases * w[:, None])
        signs = (-1.0) ** np.arange(self.cutoff + 1)
        return (2 / np.pi) * (signs @ (np.abs(vecs) ** 2))


# --- grids ------------------------------------------------------------------

@dataclass
class PhaseGrid:
    """Rectangular grid over beta = x + i p; ``values[i, j]`` sits at (x[j], p[i])."""

    x_range: tuple[float, float]
    p_range: tuple[float, float]
    nx: int
    n_p: int
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.nx < 16 or self.n_p < 16:
            raise ValueError("grids need at least 16 samples per axis")
        for lo, hi in (self.x_range, self.p_range):
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise ValueError("grid ranges must be finite and increasing")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.nx)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(*self.p_range, self.n_p)

    @property
    def cell_area(self) -> float:
        return (self.x[1] - self.x[0]) * (self.p[1] - self.p[0])

    def header(self) -> dict:
        return {"x_range": list(self.x_range), "p_range": list(self.p_range),
                "nx": self.nx, "np": self.n_p}

    def to_csv(self) -> str:
        if self.values is None:
            raise ValueError("grid has no values")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "p", "value"])
        for i, pv in enumerate(self.p):
            for j, xv in enumerate(self.x):
                writer.writerow([f"{xv:.17g}", f"{pv:.17g}", f"{self.values[i, j]:.17g}"])
        return buf.getvalue()


def auto_grid(psi: FockVector, n: int = 64) -> PhaseGrid:
    """Square grid of half-width sqrt(2<n>+1) + 3 around the origin."""
    probs = psi.probabilities()
    mean = float(np.arange(psi.dim) @ probs / probs.sum())
    half = math.sqrt(2 * mean + 1) + 3
    return PhaseGrid((-half, half), (-half, half), n, n)


def _evaluate_grid(psi: FockVector, grid: PhaseGrid, kind: str, eps: float) -> PhaseGrid:
    xs, ps = grid.x, grid.p
    radius = float(np.max(np.abs(xs[None, :] + 1j * ps[:, None])))
    ev = RayEvaluator(psi, radius, eps)
    probs = ev.psi.probabilities()
    mean = float(np.arange(ev.psi.dim) @ probs)
    cell = max(xs[1] - xs[0], ps[1] - ps[0])
    if mean > 0 and cell > 0.5 / math.sqrt(mean):
        warnings.warn(f"grid cell {cell:.3g} is coarse for <n> = {mean:.3g}", stacklevel=3)
    values = np.empty((grid.n_p, grid.nx))
    for i, pv in enumerate(ps):
        for j, xv in enumerate(xs):
            beta = complex(xv, pv)
            t, theta = abs(beta), math.atan2(pv, xv)
            if kind == "wigner":
                values[i, j] = ev.wigner_ray(theta, [t])[0]
            else:
                values[i, j] = abs(ev.characteristic(theta, [t])[0]) ** 2
    return PhaseGrid(grid.x_range, grid.p_range, grid.nx, grid.n_p, values)


def wigner(psi: FockVector, grid: PhaseGrid, eps: float = DEFAULT_EPS) -> PhaseGrid:
    """Wigner function on ``grid`` via displaced parity, normalized to unit integral."""
    return _evaluate_grid(psi, grid, "wigner", eps)


def wigner_at(psi: FockVector, beta: complex, eps: float = DEFAULT_EPS) -> float:
    ev = RayEvaluator(psi, max(abs(beta), 1e-3), eps)
    return float(ev.wigner_ray(np.angle(beta), [abs(beta)])[0])


def overlap_grid(psi: FockVector, grid: PhaseGrid, eps: float = DEFAULT_EPS) -> PhaseGrid:
    return _evaluate_grid(psi, grid, "overlap", eps)


def overlap_field(psi: FockVector, lam: complex, eps: float = DEFAULT_EPS) -> float:
    """O_lambda = |<psi| D[lambda] |psi>|^2, equal to 1 at lambda = 0.

    This is the phase-space overlap of W with its displaced copy, rescaled
    so the undisplaced overlap is one.
    """
    ev = RayEvaluator(psi, max(abs(lam), 1e-3), eps)
    return float(abs(ev.characteristic(np.angle(lam), [abs(lam)])[0]) ** 2)


# --- first zeros and fringe area -------------------------------------------

def _radial_grid(radius: float) -> np.ndarray:
    inner = np.geomspace(1e-3, 0.05, 12)
    outer = np.linspace(0.05, radius, int(math.ceil(radius / 0.01)) + 1)
    return np.unique(np.concatenate([inner, outer]))


def _first_root(func, radii, values, real_valued: bool) -> float | None:
    if real_valued:
        signs = np.sign(values)
        for k in range(len(radii) - 1):
            if abs(values[k + 1]) <= ZERO_THRESHOLD ** 0.5 and abs(values[k + 1]) ** 2 <= ZERO_THRESHOLD:
                return float(radii[k + 1])
            if signs[k] != 0 and signs[k] * signs[k + 1] < 0:
                lo, hi = radii[k], radii[k + 1]
                return float(brentq(func, lo, hi, xtol=1e-14, rtol=RADIUS_RTOL / 4))
        return None
    mags = np.abs(values) ** 2
    for k in range(1, len(radii) - 1):
        if mags[k] <= mags[k - 1] and mags[k] <= mags[k + 1]:
            res = minimize_scalar(lambda t: abs(func(t)) ** 2, bounds=(radii[k - 1], radii[k + 1]),
                                  method="bounded", options={"xatol": RADIUS_RTOL * radii[k]})
            if res.fun <= ZERO_THRESHOLD:
                return float(res.x)
    return None


def _ray_root(ev: RayEvaluator, theta: float, source: str) -> float | None:
    radii = _radial_grid(ev.radius)
    if source == "overlap":
        chi = ev.characteristic(theta, radii)
        real_valued = np.max(np.abs(chi.imag)) <= 1e-10
        if real_valued:
            func = lambda t: float(ev.characteristic(theta, [t])[0].real)  # noqa: E731
            return _first_root(func, radii, chi.real, True)
        func = lambda t: complex(ev.characteristic(theta, [t])[0])  # noqa: E731
        return _first_root(func, radii, chi, False)
    if source == "wigner":
        w = ev.wigner_ray(theta, radii)
        func = lambda t: float(ev.wigner_ray(theta, [t])[0])  # noqa: E731
        return _first_root(func, radii, w, True)
    raise ValueError(f"unknown fringe source {source!r}")


def first_zero(psi: FockVector, theta_dir: float, search_radius: float = SEARCH_RADIUS,
               source: str = "overlap", eps: float = DEFAULT_EPS) -> float | None:
    """Smallest t > 0 at which O_{t e^{i theta_dir}} vanishes, or None.

    ``None`` means the overlap has no zero within ``search_radius`` in this
    direction (a Gaussian state never does).
    """
    ev = RayEvaluator(psi, search_radius, eps)
    return _ray_root(ev, theta_dir, source)


@dataclass
class FringeReport:
    lambda_zero: list[tuple[float, float]]
    cfa: float
    capped: list[float] = field(default_factory=list)
    source: str = "overlap"
    search_radius: float = SEARCH_RADIUS
    refined_directions: int = 0

    @property
    def zero_fraction(self) -> float:
        n = len(self.lambda_zero)
        return (n - len(self.capped)) / n

    def to_dict(self) -> dict:
        return {
            "lambda_zero": [[t, r] for t, r in self.lambda_zero],
            "cfa": self.cfa,
            "capped_directions": self.capped,
            "zero_fraction": self.zero_fraction,
            "source": self.source,
            "search_radius": self.search_radius,
            "refined_directions": self.refined_directions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _sector_area(ta: float, ra: float, tb: float, rb: float) -> float:
    return 0.25 * (tb - ta) * (ra * ra + rb * rb)


def fringe_report(psi: FockVector, n_directions: int = 64, search_radius: float = SEARCH_RADIUS,
                  source: str = "overlap", eps: float = DEFAULT_EPS,
                  refine_depth: int = REFINE_DEPTH, refine_tol: float = REFINE_TOL) -> FringeReport:
    """First-zero radii on ``n_directions`` uniform directions and the enclosed area.

    The area is (1/2) int r(theta)^2 dtheta by the trapezoid rule. r(theta)
    jumps where the first zero moves to another fringe or leaves the search
    disk, so each interval between uniform directions is bisected (up to
    ``refine_depth`` times) while halving it changes its area by more than
    ``refine_tol`` times the coarse total. Directions without a zero are
    capped at ``search_radius`` and listed in ``capped``. O_lambda is even in
    lambda, so for the overlap source only half the circle is searched.
    """
    if n_directions < 4:
        raise ValueError("need at least 4 directions")
    ev = RayEvaluator(psi, search_radius, eps)
    half = source == "overlap" and n_directions % 2 == 0
    span = math.pi if half else 2 * math.pi
    count = n_directions // 2 if half else n_directions
    cache: dict[float, float | None] = {}

    def radius(theta: float) -> float:
        if theta not in cache:
            cache[theta] = _ray_root(ev, theta % (2 * math.pi), source)
        root = cache[theta]
        return search_radius if root is None else root

    base = [span * k / count for k in range(count + 1)]
    radii = [radius(t) for t in base]
    coarse = sum(_sector_area(base[k], radii[k], base[k + 1], radii[k + 1]) for k in range(count))
    tol = refine_tol * coarse

    def segment(ta, ra, tb, rb, depth, tol_here):
        whole = _sector_area(ta, ra, tb, rb)
        if depth == 0:
            return whole
        tm = 0.5 * (ta + tb)
        rm = radius(tm)
        left, right = _sector_area(ta, ra, tm, rm), _sector_area(tm, rm, tb, rb)
        if abs(left + right - whole) <= tol_here:
            return left + right
        return (segment(ta, ra, tm, rm, depth - 1, tol_here / 2)
                + segment(tm, rm, tb, rb, depth - 1, tol_here / 2))

    area = sum(segment(base[k], radii[k], base[k + 1], radii[k + 1], refine_depth, tol / count)
               for k in range(count))
    if half:
        area *= 2.0
    thetas = 2 * np.pi * np.arange(n_directions) / n_directions
    lambda_zero, capped = [], []
    for k, theta in enumerate(thetas):
        key = base[k % count] if half else base[k]
        root = cache[key]
        if root is None:
            capped.append(float(theta))
            root = search_radius
        lambda_zero.append((float(theta), float(root)))
    return FringeReport(lambda_zero, area, capped, source, search_radius, len(cache) - len(base))


def central_fringe_area(psi: FockVector, n_directions: int = 64,
                        search_radius: float = SEARCH_RADIUS, source: str = "overlap",
                        eps: float = DEFAULT_EPS) -> float:
    """Area enclosed by the first-zero curve around the origin.

    Raises ``ValueError`` when fewer than 90% of directions have a zero.
    """
    rep = fringe_report(psi, n_directions, search_radius, source, eps)
    if rep.zero_fraction < MIN_ZERO_FRACTION:
        raise ValueError(
            f"only {rep.zero_fraction:.0%} of directions have a first zero; CFA undefined"
        )
    return rep.cfa
