"""Truncated Fock-space vectors and single-mode operators.

Every state in the package is a :class:`FockVector` holding amplitudes over
number states ``0..N``. Displacement and squeezing are obtained by
exponentiating the truncated generator, so they are exactly unitary on the
truncated space; the truncation error is tracked instead through the weight
sitting in the guard band (the top 10% of indices).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

DEFAULT_EPS = 1e-10
GUARD_FRACTION = 0.9
CUTOFF_FLOOR = 32
CUTOFF_CEILING = 4096
# photon number injected by a single D or S must stay below this fraction of N
GENERATOR_BUDGET = 0.25

OPERATOR_KINDS = ("annihilate", "create", "number", "displace", "squeeze", "parity")


class TruncationError(ValueError):
    """Raised when a truncated representation cannot be trusted."""


class DimensionError(ValueError):
    """Raised when two objects live on different truncated spaces."""


def guard_start(cutoff: int) -> int:
    """First index of the guard band, i.e. the smallest n with n > 0.9 N."""
    return int(np.floor(GUARD_FRACTION * cutoff)) + 1


def _tail_mass(amps: np.ndarray) -> float:
    weights = np.abs(amps) ** 2
    total = weights.sum()
    if total == 0.0:
        return 0.0
    return float(weights[guard_start(len(amps) - 1):].sum() / total)


@dataclass(frozen=True)
class FockVector:
    """Pure single-mode state truncated at photon number ``cutoff``.

    ``tail_mass`` is the fraction of the squared norm carried by the guard
    band; it is recomputed whenever a new vector is produced.
    """

    amplitudes: np.ndarray
    cutoff: int
    tail_mass: float = field(default=0.0)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 2:
            raise ValueError("cutoff must be at least 1")
        if self.cutoff != amps.size - 1:
            raise DimensionError(
                f"cutoff {self.cutoff} does not match {amps.size} amplitudes"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "tail_mass", _tail_mass(amps))

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "FockVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(amps, amps.size - 1)

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def flagged(self, eps: float = DEFAULT_EPS) -> bool:
        return self.tail_mass >= eps

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def resized(self, cutoff: int) -> "FockVector":
        """Zero-pad to a larger cutoff, or cut down to a smaller one."""
        amps = np.zeros(cutoff + 1, dtype=complex)
        k = min(cutoff, self.cutoff) + 1
        amps[:k] = self.amplitudes[:k]
        return FockVector(amps, cutoff)

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "re": self.amplitudes.real.tolist(),
            "im": self.amplitudes.imag.tolist(),
            "tail_mass": self.tail_mass,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FockVector":
        extra = set(data) - {"cutoff", "re", "im", "tail_mass"}
        if extra:
            raise ValueError(f"unknown FockVector fields: {sorted(extra)}")
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.shape != im.shape:
            raise DimensionError("re and im arrays differ in length")
        return cls(re + 1j * im, int(data["cutoff"]))

    @classmethod
    def from_json(cls, text: str) -> "FockVector":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class OperatorMatrix:
    entries: np.ndarray
    label: str
    params: tuple = ()

    @property
    def cutoff(self) -> int:
        return self.entries.shape[0] - 1


def basis(n: int, cutoff: int) -> FockVector:
    """Number state ``|n>``."""
    if not 0 <= n <= cutoff:
        raise ValueError(f"|{n}> is outside cutoff {cutoff}")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[n] = 1.0
    return FockVector(amps, cutoff)


def vacuum(cutoff: int) -> FockVector:
    return basis(0, cutoff)


def annihilation_matrix(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1).astype(complex)


def injected_photons(kind: str, alpha: complex = 0.0, r: float = 0.0) -> float:
    """Mean photon number the operator puts into the vacuum.

    Used as the size measure of the generator for the cutoff guard: the
    operator norm of the truncated generator itself grows with the cutoff
    and so cannot serve as a cutoff-independent trust criterion.
    """
    if kind == "displace":
        return abs(alpha) ** 2
    if kind == "squeeze":
        return np.sinh(abs(r)) ** 2
    return 0.0


def check_generator(kind: str, cutoff: int, alpha: complex = 0.0, r: float = 0.0):
    size = injected_photons(kind, alpha, r)
    if size > GENERATOR_BUDGET * cutoff:
        raise TruncationError(
            f"{kind} injects {size:.3g} photons, above {GENERATOR_BUDGET} x cutoff {cutoff}"
        )


@lru_cache(maxsize=256)
def _operator(kind: str, cutoff: int, alpha: complex, r: float, phi: float) -> np.ndarray:
    a = annihilation_matrix(cutoff)
    ad = a.conj().T
    if kind == "annihilate":
        out = a
    elif kind == "create":
        out = ad
    elif kind == "number":
        out = np.diag(np.arange(cutoff + 1, dtype=float)).astype(complex)
    elif kind == "parity":
        out = np.diag((-1.0) ** np.arange(cutoff + 1)).astype(complex)
    elif kind == "displace":
        gen = alpha * ad - np.conj(alpha) * a
        out = scipy.linalg.expm(gen)
    elif kind == "squeeze":
        gen = 0.5 * r * (np.exp(-1j * phi) * (a @ a) - np.exp(1j * phi) * (ad @ ad))
        out = scipy.linalg.expm(gen)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    out.setflags(write=False)
    return out


def build_operator(
    kind: str, cutoff: int, alpha: complex = 0.0, r: float = 0.0, phi: float = 0.0
) -> OperatorMatrix:
    """Matrix of a single-mode operator in the number basis.

    ``displace`` is D[alpha] = exp(alpha a^dag - alpha^* a); ``squeeze`` is
    S[r e^{i phi}] = exp((r/2)(e^{-i phi} a^2 - e^{i phi} a^dag^2)). Both are
    exponentials of the truncated generator.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    alpha = complex(alpha)
    if not (np.isfinite(alpha) and np.isfinite(r) and np.isfinite(phi)):
        raise ValueError("operator parameters must be finite")
    params: tuple = ()
    if kind == "displace":
        params = (alpha,)
    elif kind == "squeeze":
        if r < 0:
            raise ValueError("squeeze magnitude must be >= 0; use phi=pi for S[-r]")
        if not 0.0 <= phi < 2 * np.pi:
            raise ValueError("squeeze phase must lie in [0, 2 pi)")
        params = (float(r), float(phi))
    check_generator(kind, cutoff, alpha, r)
    mat = _operator(kind, cutoff, alpha if kind == "displace" else 0j,
                    float(r) if kind == "squeeze" else 0.0,
                    float(phi) if kind == "squeeze" else 0.0)
    return OperatorMatrix(mat, kind, params)


def squeeze(r: float, cutoff: int) -> OperatorMatrix:
    """S[r] for real, possibly negative, r (S[-r] = S[r e^{i pi}])."""
    if r < 0:
        return build_operator("squeeze", cutoff, r=-r, phi=np.pi)
    return build_operator("squeeze", cutoff, r=r)


def displace(alpha: complex, cutoff: int) -> OperatorMatrix:
    return build_operator("displace", cutoff, alpha=alpha)


def apply(op: OperatorMatrix, psi: FockVector) -> FockVector:
    """Matrix-vector product; the result is not renormalized."""
    if op.entries.shape[0] != psi.dim:
        raise DimensionError(
            f"operator of size {op.entries.shape[0]} cannot act on cutoff {psi.cutoff}"
        )
    return FockVector(op.entries @ psi.amplitudes, psi.cutoff)


def inner(phi: FockVector, psi: FockVector) -> complex:
    """<phi|psi>."""
    if phi.cutoff != psi.cutoff:
        raise DimensionError(f"cutoffs differ: {phi.cutoff} vs {psi.cutoff}")
    return complex(np.vdot(phi.amplitudes, psi.amplitudes))


def normalize(psi: FockVector) -> FockVector:
    nrm = psi.norm()
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return FockVector(psi.amplitudes / nrm, psi.cutoff)


def add(*vectors: FockVector, weights=None) -> FockVector:
    """Linear combination of vectors sharing one cutoff."""
    cutoffs = {v.cutoff for v in vectors}
    if len(cutoffs) != 1:
        raise DimensionError(f"cutoffs differ: {sorted(cutoffs)}")
    if weights is None:
        weights = [1.0] * len(vectors)
    total = sum(w * v.amplitudes for w, v in zip(weights, vectors))
    return FockVector(total, vectors[0].cutoff)


def create_power(psi: FockVector, k: int) -> FockVector:
    """(a^dag)^k psi, with the matrix of a^dag built by :func:`build_operator`."""
    out = psi
    op = build_operator("create", psi.cutoff)
    for _ in range(k):
        out = apply(op, out)
    return out


def annihilate_power(psi: FockVector, k: int) -> FockVector:
    out = psi
    op = build_operator("annihilate", psi.cutoff)
    for _ in range(k):
        out = apply(op, out)
    return out


def rotate(psi: FockVector, angle: float) -> FockVector:
    """exp(i angle n) psi; maps |beta> to |e^{i angle} beta>."""
    phases = np.exp(1j * angle * np.arange(psi.dim))
    return FockVector(phases * psi.amplitudes, psi.cutoff)


def expectation(op: OperatorMatrix, psi: FockVector) -> complex:
    return inner(psi, apply(op, psi))
