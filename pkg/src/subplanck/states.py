"""Named states: coherent, cat, compass (kitten) states and the squeezed
superpositions, optionally photon-added or photon-subtracted.

Every base state is a finite superposition of squeezed coherent states
``c_b S[r_b] |alpha_b>``; :func:`branches` exposes that decomposition so the
analytic oracle can work from the same definition as the Fock-space builder.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import fock
from .fock import DEFAULT_EPS, FockVector, TruncationError

FAMILIES = ("coherent", "cat", "ks_plus", "ks_minus", "sq", "ss", "ssd")
BASIS_SIZE = {"cat": 2, "ks_minus": 2, "ks_plus": 4}

# k1 -> (k0=0, k0=1)
FBAR = {
    0: (1.0, 1.0),
    1: (1.0, 1.0),
    2: (1.0, -1.0),
    3: (1.0, -1.0),
}


def fbar(k1: int, k0: int) -> float:
    """Compass-state branch weight; k0=0 for the even KS(+), k0=1 for KS(-)."""
    return FBAR[k1 % 4][k0]


def fbar_sine_form(k1: int, k0: int) -> float:
    return 2 ** (k0 / 2) * math.sin((2 * k1 + 1) * math.pi / 4) ** k0


def _as_complex(value) -> complex:
    if isinstance(value, dict):
        extra = set(value) - {"re", "im"}
        if extra:
            raise ValueError(f"unknown complex fields: {sorted(extra)}")
        return complex(value.get("re", 0.0), value.get("im", 0.0))
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("complex values are [re, im] pairs")
        return complex(value[0], value[1])
    return complex(value)


@dataclass(frozen=True)
class StateSpec:
    family: str
    alpha: complex = 0j
    beta: complex = 0j
    r: float = 0.0
    phi: float = 0.0
    l: int = 0
    n_add: int = 0
    n_sub: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_complex(self.alpha))
        object.__setattr__(self, "beta", _as_complex(self.beta))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "phi", float(self.phi))
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        for name in ("alpha", "beta", "r", "phi"):
            if not cmath.isfinite(complex(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if not 0.0 <= self.phi < 2 * math.pi:
            raise ValueError("phi must lie in [0, 2 pi)")
        if self.family in BASIS_SIZE and not 0 <= self.l < BASIS_SIZE[self.family]:
            raise ValueError(
                f"l={self.l} out of range for {self.family} "
                f"(0..{BASIS_SIZE[self.family] - 1})"
            )
        if self.n_add < 0 or self.n_sub < 0:
            raise ValueError("photon counts must be >= 0")
        if self.n_add and self.n_sub:
            raise ValueError("n_add and n_sub cannot both be nonzero")

    def with_(self, **changes) -> "StateSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alpha"] = [self.alpha.real, self.alpha.imag]
        out["beta"] = [self.beta.real, self.beta.imag]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpec":
        allowed = {"family", "alpha", "beta", "r", "phi", "l", "n_add", "n_sub"}
        extra = set(data) - allowed
        if extra:
            raise ValueError(f"unknown StateSpec fields: {sorted(extra)}")
        if "family" not in data:
            raise ValueError("StateSpec requires a family tag")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "StateSpec":
        return cls.from_dict(json.loads(text))


def branches(spec: StateSpec) -> list[tuple[complex, float, complex]]:
    """Base state as ``[(coefficient, signed squeeze r, displacement)]``.

    The unnormalized base state is ``sum c S[r] |alpha>`` with the squeeze
    phase ``spec.phi`` and S[-r] taken as r -> -r. Photon addition or
    subtraction is applied afterwards and is not part of the list.
    """
    fam = spec.family
    if fam == "coherent":
        return [(1.0, 0.0, spec.alpha)]
    if fam == "cat":
        return [(cmath.exp(1j * k * spec.l * math.pi), 0.0, cmath.exp(1j * k * math.pi) * spec.beta)
                for k in range(2)]
    if fam in ("ks_plus", "ks_minus"):
        k0 = 0 if fam == "ks_plus" else 1
        return [(fbar(k, k0) * cmath.exp(-1j * spec.l * k * math.pi / 2), 0.0,
                 (1j ** k) * spec.beta)
                for k in range(4)]
    if fam == "sq":
        return [(1.0, spec.r, 0j)]
    if fam == "ss":
        return [(1.0, spec.r, 0j), (1.0, -spec.r, 0j)]
    if fam == "ssd":
        return [(1.0, spec.r, spec.alpha), (1.0, spec.r, -spec.alpha)]
    raise ValueError(f"unknown family {fam!r}")


def _clean_phase(c: complex) -> complex:
    # exp(i k pi) etc. carry 1e-16 imaginary residue
    return complex(round(c.real, 15), round(c.imag, 15))


def _squeeze_op(r: float, phi: float, cutoff: int):
    if r == 0.0:
        return None
    if r > 0:
        return fock.build_operator("squeeze", cutoff, r=r, phi=phi)
    return fock.build_operator("squeeze", cutoff, r=-r, phi=(phi + math.pi) % (2 * math.pi))


def _coherent(alpha: complex, cutoff: int, cache: dict) -> FockVector:
    """|alpha>, sharing one displacement per magnitude via e^{i theta n}."""
    mag = abs(alpha)
    if mag not in cache:
        cache[mag] = fock.apply(fock.displace(mag, cutoff), fock.vacuum(cutoff))
    vec = cache[mag]
    if mag == 0.0:
        return vec
    return fock.rotate(vec, cmath.phase(alpha))


def build_unnormalized(spec: StateSpec, cutoff: int) -> tuple[FockVector, float]:
    """Construct the state without the final normalization.

    Returns the vector and the largest guard-band weight seen at any stage
    of the construction.
    """
    cache: dict = {}
    worst_tail = 0.0
    total = np.zeros(cutoff + 1, dtype=complex)
    for coef, r, alpha in branches(spec):
        vec = _coherent(alpha, cutoff, cache)
        worst_tail = max(worst_tail, vec.tail_mass)
        op = _squeeze_op(r, spec.phi, cutoff)
        if op is not None:
            vec = fock.apply(op, vec)
            worst_tail = max(worst_tail, vec.tail_mass)
        total = total + _clean_phase(coef) * vec.amplitudes
    psi = FockVector(total, cutoff)
    if spec.n_add:
        psi = fock.create_power(psi, spec.n_add)
    elif spec.n_sub:
        psi = fock.annihilate_power(psi, spec.n_sub)
    worst_tail = max(worst_tail, psi.tail_mass)
    return psi, worst_tail


def build_state(spec: StateSpec, cutoff: int, eps: float = DEFAULT_EPS,
                allow_flagged: bool = False) -> FockVector:
    """Normalized Fock vector for ``spec``.

    Raises :class:`TruncationError` when any construction stage leaves at
    least ``eps`` of its weight in the guard band, unless ``allow_flagged``.
    """
    psi, worst_tail = build_unnormalized(spec, cutoff)
    if psi.norm() == 0.0:
        raise ValueError(f"{spec.family} state vanishes (e.g. subtraction from vacuum)")
    psi = fock.normalize(psi)
    if worst_tail >= eps and not allow_flagged:
        raise TruncationError(
            f"guard-band weight {worst_tail:.3g} >= {eps:g} at cutoff {cutoff}"
        )
    return psi


def cutoff_ladder():
    n = fock.CUTOFF_FLOOR
    while n <= fock.CUTOFF_CEILING:
        yield n
        n *= 2


def auto_cutoff(spec: StateSpec, eps: float = DEFAULT_EPS) -> int:
    """Smallest ladder cutoff (32, 64, ...) at which ``spec`` is unflagged."""
    if not 0.0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    for cutoff in cutoff_ladder():
        try:
            build_state(spec, cutoff, eps)
        except TruncationError:
            continue
        return cutoff
    raise TruncationError(
        f"{spec.family} state needs a cutoff above {fock.CUTOFF_CEILING}; "
        "parameters out of supported range"
    )


def make_state(spec: StateSpec, eps: float = DEFAULT_EPS) -> FockVector:
    """Build ``spec`` at its automatically chosen cutoff (see :func:`auto_cutoff`)."""
    if not 0.0 < eps <= 1e-3:
        raise ValueError("eps must lie in (0, 1e-3]")
    for cutoff in cutoff_ladder():
        try:
            return build_state(spec, cutoff, eps)
        except TruncationError:
            continue
    raise TruncationError(
        f"{spec.family} state needs a cutoff above {fock.CUTOFF_CEILING}; "
        "parameters out of supported range"
    )


def parity_expectation(psi: FockVector, eps: float = DEFAULT_EPS) -> float:
    if psi.flagged(eps):
        raise TruncationError(f"state is flagged (tail {psi.tail_mass:.3g})")
    probs = psi.probabilities()
    signs = (-1.0) ** np.arange(psi.dim)
    return float(signs @ probs / probs.sum())


# --- parity-matched pairs -------------------------------------------------

PAIR_LABELS = ("prstrg-1", "prstrg-2", "prstrg-3", "trgtrgn-1", "trgtrgp-2", "trgtrgE-3")

# label -> (proposed family, target family)
PAIR_FAMILIES = {
    "prstrg-1": ("ssd", "ks_minus"),
    "prstrg-2": ("ss", "ks_plus"),
    "prstrg-3": ("sq", "cat"),
    "trgtrgn-1": ("ks_minus", "ks_minus"),
    "trgtrgp-2": ("ks_plus", "ks_plus"),
    "trgtrgE-3": ("cat", "cat"),
}


@dataclass(frozen=True)
class PairSpec:
    """A (proposed, target) pairing with ``n`` photons added to the proposed state.

    ``source_l`` is the basis label of the photon-added state for the
    target-target pairs; only trgtrgn-1 allows the value 1.
    """

    label: str
    n: int
    source_l: int = 0

    def __post_init__(self):
        if self.label not in PAIR_LABELS:
            raise ValueError(f"unknown pair label {self.label!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        allowed = (0, 1) if self.label == "trgtrgn-1" else (0,)
        if self.source_l not in allowed:
            raise ValueError(f"source_l={self.source_l} not allowed for {self.label}")

    @property
    def target_l(self) -> int:
        n = self.n
        if self.label == "prstrg-1":
            return round((1 + math.cos(n * math.pi)) / 2)
        if self.label == "trgtrgn-1":
            if self.source_l == 0:
                return abs(round(math.sin(n * math.pi / 2)))
            return abs(round(math.cos(n * math.pi / 2)))
        target = PAIR_FAMILIES[self.label][1]
        return n % BASIS_SIZE[target]

    @property
    def families(self) -> tuple[str, str]:
        return PAIR_FAMILIES[self.label]


def resolve_pair(pair: PairSpec, r: float = 0.0, alpha: float = 0.0, beta: float = 0.0,
                 beta_phase: complex = 1.0, phi: float = 0.0) -> tuple[StateSpec, StateSpec]:
    """Proposed and target specs for a pair.

    ``alpha`` and ``beta`` are magnitudes. For the target-target pairs the
    proposed state is the photon-added target family at amplitude
    ``alpha * beta_phase``; for the squeezed proposals ``alpha`` stays real.
    """
    proposed_family, target_family = pair.families
    beta_c = beta * complex(beta_phase)
    target = StateSpec(target_family, beta=beta_c, l=pair.target_l)
    if pair.label.startswith("trgtrg"):
        proposed = StateSpec(proposed_family, beta=alpha * complex(beta_phase),
                             l=pair.source_l, n_add=pair.n)
    elif proposed_family == "ssd":
        proposed = StateSpec("ssd", alpha=alpha, r=r, phi=phi, n_add=pair.n)
    else:
        proposed = StateSpec(proposed_family, r=r, phi=phi, n_add=pair.n)
    return proposed, target
