"""Closed-form moments <alpha| S[r1] a^n a^dag^m S[r2] |beta> and the
displacement QFI assembled from them.

Derivatives with respect to the generating variables are taken by truncated
bivariate power-series arithmetic (:class:`BivarPoly`): the generating
function is exp(quadratic polynomial), so its Taylor coefficients are exact
up to rounding.

Two generating functions are provided. ``printed`` transcribes the
published exponent term for term, reading |delta|^2 as delta delta^* and
Im[X] as (X - X^*)/2i with gamma and gamma^* independent. ``derived``
follows separately from S^dag a S = a cosh r - a^dag sinh r and the
Bargmann kernel of S[r]. Both agree with the Fock-space route.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import fock
from .metrics import convention_factor
from .states import StateSpec, branches

MAX_DEGREE = 12
COSH_LIMIT = 350.0


class BivarPoly:
    """Polynomial in two variables (x, y) truncated at total degree ``dmax``.

    ``coeffs[i, j]`` multiplies x**i * y**j. In the oracle x stands for
    gamma (raising, order m) and y for gamma^* (lowering, order n).
    """

    __slots__ = ("coeffs", "dmax")

    def __init__(self, coeffs, dmax: int):
        c = np.zeros((dmax + 1, dmax + 1), dtype=complex)
        src = np.asarray(coeffs, dtype=complex)
        k0, k1 = min(src.shape[0], dmax + 1), min(src.shape[1], dmax + 1)
        c[:k0, :k1] = src[:k0, :k1]
        i, j = np.indices(c.shape)
        c[i + j > dmax] = 0.0
        c.setflags(write=False)
        self.coeffs = c
        self.dmax = dmax

    @classmethod
    def constant(cls, value: complex, dmax: int) -> "BivarPoly":
        return cls([[value]], dmax)

    @classmethod
    def x(cls, dmax: int) -> "BivarPoly":
        return cls([[0.0], [1.0]], dmax)

    @classmethod
    def y(cls, dmax: int) -> "BivarPoly":
        return cls([[0.0, 1.0]], dmax)

    def _coerce(self, other) -> "BivarPoly":
        if isinstance(other, BivarPoly):
            if other.dmax != self.dmax:
                raise ValueError("degree ceilings differ")
            return other
        return BivarPoly.constant(other, self.dmax)

    def __add__(self, other):
        other = self._coerce(other)
        return BivarPoly(self.coeffs + other.coeffs, self.dmax)

    __radd__ = __add__

    def __neg__(self):
        return BivarPoly(-self.coeffs, self.dmax)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, BivarPoly):
            return BivarPoly(self.coeffs * complex(other), self.dmax)
        other = self._coerce(other)
        d = self.dmax
        out = np.zeros((d + 1, d + 1), dtype=complex)
        a, b = self.coeffs, other.coeffs
        for i in range(d + 1):
            for j in range(d + 1 - i):
                if a[i, j] == 0:
                    continue
                out[i:, j:] += a[i, j] * b[: d + 1 - i, : d + 1 - j]
        return BivarPoly(out, d)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return BivarPoly(self.coeffs / complex(scalar), self.dmax)

    def constant_term(self) -> complex:
        return complex(self.coeffs[0, 0])

    def coefficient(self, i: int, j: int) -> complex:
        if i + j > self.dmax:
            raise ValueError(f"degree {i + j} exceeds ceiling {self.dmax}")
        return complex(self.coeffs[i, j])

    def swap(self) -> "BivarPoly":
        """Exchange the roles of x and y."""
        return BivarPoly(self.coeffs.T, self.dmax)

    def exp(self) -> "BivarPoly":
        """exp(p) truncated at dmax, via exp(p0) * sum_k (p - p0)^k / k!."""
        c0 = self.constant_term()
        rest = self - c0
        term = BivarPoly.constant(1.0, self.dmax)
        total = term
        for k in range(1, self.dmax + 1):
            term = term * rest / k
            total = total + term
        return total * cmath.exp(c0)


@dataclass(frozen=True)
class CrossTermParams:
    """Arguments of C_{n,m}^{r1,r2}(alpha, beta) = <alpha|S[r1] a^n a^dag^m S[r2]|beta>."""

    n: int
    m: int
    r1: float
    r2: float
    alpha: complex
    beta: complex

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("derivative orders must be >= 0")
        if self.n + self.m > MAX_DEGREE:
            raise ValueError(f"n+m={self.n + self.m} exceeds degree ceiling {MAX_DEGREE}")
        for name in ("r1", "r2", "alpha", "beta"):
            if not cmath.isfinite(complex(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if abs(self.r1) + abs(self.r2) > COSH_LIMIT:
            raise ValueError("squeeze parameters overflow cosh")

    @property
    def r(self) -> float:
        return self.r1 + self.r2

    @property
    def alpha_r(self) -> complex:
        return self.alpha * math.cosh(self.r) + self.alpha.conjugate() * math.sinh(self.r)


def _derived_series(p: CrossTermParams) -> BivarPoly:
    d = p.n + p.m
    v = BivarPoly.x(d)  # raising variable
    u = BivarPoly.y(d)  # lowering variable
    c2, s2 = math.cosh(p.r2), math.sinh(p.r2)
    r = p.r
    t, ch = math.tanh(r), math.cosh(r)
    a_c = p.alpha.conjugate()
    beta = p.beta
    x = v * c2 - u * s2
    y = u * c2 - v * s2
    z = x + beta
    q = (u * v) / 2 + (x * y) / 2 + y * beta
    q = q + z * z * (t / 2) + z * (a_c / ch)
    q = q + (-abs(p.alpha) ** 2 / 2 - abs(beta) ** 2 / 2 - t * a_c * a_c / 2)
    return q.exp() / math.sqrt(ch)


def _printed_series(p: CrossTermParams) -> BivarPoly:
    d = p.n + p.m
    g = BivarPoly.x(d)   # gamma
    gc = BivarPoly.y(d)  # gamma^*
    c2, s2 = math.cosh(p.r2), math.sinh(p.r2)
    t = math.tanh(p.r)
    ar = p.alpha_r
    beta = p.beta
    gbar = g * c2 + gc * s2
    gbar_c = gc * c2 + g * s2
    delta = gbar - ar + beta
    delta_c = gbar_c - ar.conjugate() + beta.conjugate()
    im_arg = gbar * beta.conjugate() - beta.conjugate() * ar - gbar_c * ar
    im_arg_c = gbar_c * beta - beta * ar.conjugate() - gbar * ar.conjugate()
    # i Im[X] = (X - X^*) / 2 with gamma and gamma^* independent
    expo = delta * delta * (t / 2) - (delta * delta_c + g * gc) / 2 + (im_arg - im_arg_c) / 2
    return expo.exp() * ((-1) ** p.n / math.sqrt(math.cosh(p.r)))


FORMS = {"derived": _derived_series, "printed": _printed_series}


def cross_term(p: CrossTermParams, form: str = "printed") -> complex:
    """C_{n,m}^{r1,r2}(alpha, beta) from the closed-form generating function."""
    try:
        series = FORMS[form](p)
    except KeyError:
        raise ValueError(f"unknown cross-term form {form!r}") from None
    value = series.coefficient(p.m, p.n) * math.factorial(p.m) * math.factorial(p.n)
    if not cmath.isfinite(value):
        raise ValueError("nonfinite intermediate in cross term")
    return value


def fock_cross_term(p: CrossTermParams, cutoff: int | None = None) -> complex:
    """The same matrix element evaluated with truncated Fock-space matrices."""
    def ket(r, amp, n):
        vec = fock.apply(fock.displace(amp, n), fock.vacuum(n))
        return fock.apply(fock.squeeze(r, n), vec)

    ladder = [cutoff] if cutoff is not None else [32 * 2 ** k for k in range(8)]
    for n in ladder:
        try:
            left, right = ket(-p.r1, p.alpha, n), ket(p.r2, p.beta, n)
        except fock.TruncationError:
            continue
        if cutoff is not None or max(left.tail_mass, right.tail_mass) < 1e-16:
            return _padded_matrix_element(left.amplitudes, right.amplitudes, p.n, p.m)
    raise fock.TruncationError("no cutoff on the ladder resolves the cross term")


def _padded_matrix_element(left: np.ndarray, right: np.ndarray, n: int, m: int) -> complex:
    """<left| a^n a^dag^m |right> computed as <a^dag^n left | a^dag^m right>."""
    pad = max(n, m)
    left = np.concatenate([left, np.zeros(pad, dtype=complex)])
    right = np.concatenate([right, np.zeros(pad, dtype=complex)])
    roots = np.sqrt(np.arange(left.size))

    def raise_k(vec, k):
        for _ in range(k):
            vec = np.concatenate([[0.0], roots[1:] * vec[:-1]])
        return vec

    return complex(np.vdot(raise_k(left, n), raise_k(right, m)))


def _check_family(spec: StateSpec):
    if spec.n_sub:
        raise ValueError("photon-subtracted states are not covered by the moment table")
    if spec.phi != 0.0:
        raise ValueError("the moment table assumes real squeezing (phi = 0)")


def moment_f(spec: StateSpec, n: int, m: int, theta: float, form: str = "printed") -> complex:
    """f[n, m] = e^{i theta (m-n)} <phi| a^n a^dag^m |phi> for the base state phi.

    ``phi`` is the unnormalized superposition of ``spec`` before photon
    addition, so f[n_o, n_o] is the squared norm of the n_o-photon-added state.
    """
    _check_family(spec)
    terms = branches(spec)
    total = 0j
    for c_left, r_left, a_left in terms:
        for c_right, r_right, a_right in terms:
            params = CrossTermParams(n, m, -r_left, r_right, a_left, a_right)
            total += np.conj(c_left) * c_right * cross_term(params, form)
    return complex(total * cmath.exp(1j * theta * (m - n)))


def fock_moment_f(spec: StateSpec, n: int, m: int, theta: float, cutoff: int | None = None) -> complex:
    """Fock-space counterpart of :func:`moment_f`, built with the state factory."""
    from .states import auto_cutoff, build_unnormalized

    _check_family(spec)
    base = spec.with_(n_add=0)
    if cutoff is None:
        # one rung above the auto cutoff: expm truncation leaves ~1e-10 errors at the rung itself
        cutoff = 2 * auto_cutoff(base)
    psi, _ = build_unnormalized(base, cutoff)
    value = _padded_matrix_element(psi.amplitudes, psi.amplitudes, n, m)
    return complex(value * cmath.exp(1j * theta * (m - n)))


class DegenerateNormError(ValueError):
    pass


def generator_moments_closed_form(spec: StateSpec, theta: float, form: str = "printed"):
    n = spec.n_add
    f = lambda i, j: moment_f(spec, i, j, theta, form)  # noqa: E731
    norm = f(n, n)
    if abs(norm) < 1e-14:
        raise DegenerateNormError(f"f[{n},{n}] = {norm:.3g}: degenerate normalization")
    g1 = (f(n + 1, n) + f(n, n + 1)) / norm
    g2 = sum(math.comb(2, k) * f(n + k, n + 2 - k) for k in range(3)) / norm - 1.0
    return g1, g2


def qfi_closed_form(spec: StateSpec, theta: float, convention: str = "appendix",
                    form: str = "printed") -> float:
    """Displacement QFI of the n_add-photon-added state from the moment table."""
    g1, g2 = generator_moments_closed_form(spec, theta, form)
    return convention_factor(convention) * float((g2 - g1 * g1).real)


# --- randomized dual-oracle comparison -------------------------------------

VERIFY_FAMILIES = ("coherent", "cat", "ks_plus", "ks_minus", "sq", "ss", "ssd")
ANCHORS = (
    (StateSpec("coherent", alpha=0.7 - 0.2j), 0, 0),
    (StateSpec("sq", r=0.0), 0, 0),
    (StateSpec("cat", beta=1.3, l=1), 0, 0),
)


@dataclass(frozen=True)
class OracleSample:
    spec: StateSpec
    n: int
    m: int
    theta: float
    closed: complex
    fock: complex
    qfi_closed: float
    qfi_fock: float

    @property
    def moment_deviation(self) -> float:
        """|closed - fock| / max(1, |fock|)."""
        return abs(self.closed - self.fock) / max(1.0, abs(self.fock))

    @property
    def qfi_deviation(self) -> float:
        return abs(self.qfi_closed - self.qfi_fock) / max(1.0, abs(self.qfi_fock))


def random_spec(rng: np.random.Generator) -> StateSpec:
    """Random base state within |alpha|, |beta| <= 2, r <= 1, n_add <= 3."""
    fam = VERIFY_FAMILIES[rng.integers(len(VERIFY_FAMILIES))]
    amp = lambda: 2.0 * math.sqrt(rng.random()) * cmath.exp(2j * math.pi * rng.random())  # noqa: E731
    n_add = int(rng.integers(4))
    if fam == "coherent":
        return StateSpec(fam, alpha=amp(), n_add=n_add)
    if fam in ("cat", "ks_plus", "ks_minus"):
        size = {"cat": 2, "ks_minus": 2, "ks_plus": 4}[fam]
        beta = amp()
        while abs(beta) < 0.2:
            beta = amp()
        return StateSpec(fam, beta=beta, l=int(rng.integers(size)), n_add=n_add)
    r = float(rng.random())
    if fam == "ssd":
        return StateSpec(fam, alpha=amp(), r=r, n_add=n_add)
    return StateSpec(fam, r=r, n_add=n_add)


def verify(seed: int = 0, samples: int = 60, form: str = "printed") -> list[OracleSample]:
    """Compare closed-form and Fock-space moments and QFIs on a random sample.

    Each sample draws a state, moment orders n, m <= 4 and an angle; the
    QFI of the n_add-photon-added state is compared as well.
    """
    from .metrics import qfi_displacement
    from .states import make_state

    rng = np.random.default_rng(seed)
    drawn = [(spec, n, m, 0.0) for spec, n, m in ANCHORS]
    while len(drawn) < samples:
        spec = random_spec(rng)
        n, m = (int(v) for v in rng.integers(5, size=2))
        drawn.append((spec, n, m, float(2 * math.pi * rng.random())))
    out = []
    for spec, n, m, theta in drawn[:samples]:
        closed = moment_f(spec, n, m, theta, form)
        ref = fock_moment_f(spec, n, m, theta)
        q_closed = qfi_closed_form(spec, theta, "appendix", form)
        q_fock = qfi_displacement(make_state(spec), theta, "appendix")
        out.append(OracleSample(spec, n, m, theta, closed, ref, q_closed, q_fock))
    return out


def verification_report(results: list[OracleSample], tol: float = 1e-8) -> dict:
    worst_m = max(results, key=lambda s: s.moment_deviation)
    worst_q = max(results, key=lambda s: s.qfi_deviation)
    return {
        "samples": len(results),
        "tolerance": tol,
        "max_moment_deviation": worst_m.moment_deviation,
        "max_qfi_deviation": worst_q.qfi_deviation,
        "mean_moment_deviation": float(np.mean([s.moment_deviation for s in results])),
        "mean_qfi_deviation": float(np.mean([s.qfi_deviation for s in results])),
        "worst_moment_case": {"spec": worst_m.spec.to_dict(), "n": worst_m.n, "m": worst_m.m},
        "worst_qfi_case": {"spec": worst_q.spec.to_dict()},
        "failures": sum(1 for s in results if max(s.moment_deviation, s.qfi_deviation) > tol),
        "passed": max(worst_m.moment_deviation, worst_q.qfi_deviation) <= tol,
    }
