"""Scalar observables: displacement QFI, fidelity, photon statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import fock
from .fock import DEFAULT_EPS, DimensionError, FockVector, TruncationError

# Var(G) is multiplied by this factor. "appendix": F_Q = Var G(theta);
# "intro": F_Q = 4 Var G(theta), the convention in which a coherent state gives 4.
CONVENTIONS = {"appendix": 1.0, "intro": 4.0}


def _require_clean(psi: FockVector, eps: float = DEFAULT_EPS):
    if psi.flagged(eps):
        raise TruncationError(
            f"state carries {psi.tail_mass:.3g} of its weight in the guard band"
        )


def convention_factor(convention: str) -> float:
    try:
        return CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown QFI convention {convention!r}") from None


def moment(psi: FockVector, n: int, m: int) -> complex:
    """<psi| a^n a^dag^m |psi> without renormalization.

    The vector is zero-padded so that the raising operators act exactly.
    """
    pad = max(n, m)
    amps = np.concatenate([psi.amplitudes, np.zeros(pad, dtype=complex)])
    idx = np.arange(amps.size)

    def raise_k(vec, k):
        out = vec
        for _ in range(k):
            out = np.concatenate([[0.0], np.sqrt(idx[1:]) * out[:-1]])
        return out

    return complex(np.vdot(raise_k(amps, n), raise_k(amps, m)))


def generator_moments(psi: FockVector, theta: float) -> tuple[float, float]:
    """(<G>, <G^2>) for G(theta) = a^dag e^{i theta} + a e^{-i theta}.

    Assembled from the normalized moments <a^n a^dag^m> as
    <G^2> = sum_k C(2,k) f[k, 2-k] e^{i theta (2-2k)} - 1.
    """
    norm2 = psi.norm() ** 2
    f = lambda n, m: moment(psi, n, m) * np.exp(1j * theta * (m - n)) / norm2  # noqa: E731
    g1 = f(1, 0) + f(0, 1)
    g2 = f(0, 2) + 2 * f(1, 1) + f(2, 0) - 1.0
    return float(g1.real), float(g2.real)


def qfi_displacement(psi: FockVector, theta: float, convention: str = "appendix",
                     eps: float = DEFAULT_EPS) -> float:
    """Quantum Fisher information for a small displacement along ``theta``.

    The default ``appendix`` convention returns Var G(theta) (1 for the
    vacuum); ``intro`` returns 4 Var G(theta) (4 for any coherent state).
    Equal-QFI loci do not depend on the choice.
    """
    _require_clean(psi, eps)
    g1, g2 = generator_moments(psi, theta)
    var = max(g2 - g1 * g1, 0.0)
    return convention_factor(convention) * var


def fidelity(phi: FockVector, psi: FockVector, eps: float = DEFAULT_EPS) -> float:
    """|<phi|psi>|^2 for normalized pure states on the same cutoff."""
    if phi.cutoff != psi.cutoff:
        raise DimensionError(f"cutoffs differ: {phi.cutoff} vs {psi.cutoff}")
    _require_clean(phi, eps)
    _require_clean(psi, eps)
    return min(abs(fock.inner(phi, psi)) ** 2, 1.0)


def mean_photon(psi: FockVector, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """(<n>, Var n) from the photon-number distribution."""
    _require_clean(psi, eps)
    probs = psi.probabilities()
    probs = probs / probs.sum()
    n = np.arange(psi.dim)
    mean = float(n @ probs)
    var = float(((n - mean) ** 2) @ probs)
    return mean, var


def predicted_pa_ps_energy(mean: float, variance: float, which: str) -> float:
    """Mean photon number after one photon addition ("PA") or subtraction ("PS")."""
    if mean < 0 or variance < 0:
        raise ValueError("mean and variance must be >= 0")
    if which == "PA":
        return variance / (mean + 1) + mean + 1
    if which == "PS":
        if mean == 0:
            raise ValueError("photon subtraction from a zero-photon state is undefined")
        return variance / mean + mean - 1
    raise ValueError(f"which must be 'PA' or 'PS', not {which!r}")


def small_param_limit_check(kind: str, n: int, param: float, cutoff: int = 32) -> float:
    """Fidelity of normalize((X[p] - X[-p])^n |0>) with its leading Fock term.

    ``squeeze_diff`` uses X = S and compares with |2n>; ``displace_diff``
    uses X = D and compares with |n>.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not param > 0:
        raise ValueError("param must be > 0")
    if kind == "squeeze_diff":
        plus = fock.squeeze(param, cutoff).entries
        minus = fock.squeeze(-param, cutoff).entries
        reference = 2 * n
    elif kind == "displace_diff":
        plus = fock.displace(param, cutoff).entries
        minus = fock.displace(-param, cutoff).entries
        reference = n
    else:
        raise ValueError(f"unknown limit kind {kind!r}")
    diff = plus - minus
    vec = fock.vacuum(cutoff).amplitudes
    for _ in range(n):
        vec = diff @ vec
    psi = fock.normalize(FockVector(vec, cutoff))
    return fidelity(fock.basis(reference, cutoff), psi)


@dataclass(frozen=True)
class MetricReport:
    qfi: float
    fidelity: float
    mean_n: float
    var_n: float
    parity: float
    convention: str = "appendix"
    theta: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def report(psi: FockVector, theta: float = 0.0, convention: str = "appendix",
           reference: FockVector | None = None) -> MetricReport:
    """All scalar metrics of ``psi``; fidelity is against ``reference`` (itself if None)."""
    from .states import parity_expectation

    mean, var = mean_photon(psi)
    fid = fidelity(reference, psi) if reference is not None else 1.0
    values = dict(
        qfi=qfi_displacement(psi, theta, convention),
        fidelity=fid,
        mean_n=mean,
        var_n=var,
        parity=parity_expectation(psi),
    )
    for key, val in values.items():
        if not math.isfinite(val):
            raise ValueError(f"{key} is not finite")
    return MetricReport(**values, convention=convention, theta=theta)
