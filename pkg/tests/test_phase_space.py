import math
import warnings

import numpy as np
import pytest

from subplanck import fock, metrics, phase_space
from subplanck.phase_space import PhaseGrid
from subplanck.states import StateSpec, build_state, make_state


def displaced_parity(psi, beta, cutoff=96):
    """(2/pi) <psi| D[beta] P D[-beta] |psi> with explicit matrices."""
    big = psi.resized(cutoff)
    d = fock.displace(beta, cutoff).entries
    parity = fock.build_operator("parity", cutoff).entries
    vec = big.amplitudes
    return float((2 / math.pi) * np.vdot(vec, d @ parity @ d.conj().T @ vec).real)


def test_wigner_origin_values():
    assert phase_space.wigner_at(fock.vacuum(32), 0) == pytest.approx(2 / math.pi, abs=1e-14)
    assert phase_space.wigner_at(fock.basis(1, 32), 0) == pytest.approx(-2 / math.pi, abs=1e-14)
    cat = make_state(StateSpec("cat", beta=2))
    w0 = phase_space.wigner_at(cat, 0)
    assert w0 > 0
    assert w0 == pytest.approx(displaced_parity(cat, 0), abs=1e-8)


@pytest.mark.parametrize("beta", [0.4 + 0.3j, -1.1j, 1.7])
def test_wigner_matches_displaced_parity(beta):
    psi = make_state(StateSpec("ks_minus", beta=1.3, l=1, n_add=1))
    assert phase_space.wigner_at(psi, beta) == pytest.approx(displaced_parity(psi, beta), abs=1e-8)


def test_wigner_grid_normalization_and_bound():
    psi = make_state(StateSpec("cat", beta=1.0, l=1))
    grid = phase_space.wigner(psi, phase_space.auto_grid(psi, 81))
    assert grid.values.sum() * grid.cell_area == pytest.approx(1, abs=1e-3)
    assert np.abs(grid.values).max() <= 2 / math.pi + 1e-12


def test_coarse_grid_warns():
    psi = make_state(StateSpec("cat", beta=2.5))
    with pytest.warns(UserWarning):
        phase_space.wigner(psi, PhaseGrid((-6, 6), (-6, 6), 16, 16))


def test_grid_validation_and_csv():
    with pytest.raises(ValueError):
        PhaseGrid((0, 1), (0, 1), 8, 32)
    with pytest.raises(ValueError):
        PhaseGrid((1, 0), (0, 1), 16, 16)
    with pytest.raises(ValueError):
        PhaseGrid((0, 1), (0, 1), 16, 16).to_csv()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = phase_space.wigner(fock.vacuum(32), PhaseGrid((-2, 2), (-2, 2), 17, 17))
    lines = grid.to_csv().splitlines()
    assert lines[0] == "x,p,value" and len(lines) == 1 + 17 * 17
    centre = lines[1 + 8 * 17 + 8].split(",")
    assert float(centre[0]) == 0 and float(centre[2]) == pytest.approx(2 / math.pi, abs=1e-13)
    assert len(centre[2].replace("0.", "").lstrip("0")) >= 16


def test_overlap_examples():
    assert phase_space.overlap_field(make_state(StateSpec("cat", beta=1.2)), 0) == pytest.approx(1, abs=1e-12)
    assert phase_space.overlap_field(fock.vacuum(32), 1) == pytest.approx(math.exp(-1), abs=1e-12)
    assert phase_space.overlap_field(make_state(StateSpec("cat", beta=2)), 1j * math.pi / 8) < 1e-5


def test_overlap_symmetry():
    psi = make_state(StateSpec("ssd", r=0.3, alpha=1, n_add=1))
    for lam in (0.3, 0.2 + 0.5j, -0.7j):
        assert phase_space.overlap_field(psi, lam) == pytest.approx(phase_space.overlap_field(psi, -lam), abs=1e-10)


@pytest.mark.parametrize("spec", [StateSpec("cat", beta=1.0), StateSpec("ks_plus", beta=1.5),
                                  StateSpec("ssd", r=0.3, alpha=1)])
def test_taylor_link(spec):
    psi = make_state(spec)
    t = 1e-3
    for theta in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        lam = t * complex(math.cos(theta - math.pi / 2), math.sin(theta - math.pi / 2))
        fq = metrics.qfi_displacement(psi, theta, "intro")
        assert abs(phase_space.overlap_field(psi, lam) - (1 - t ** 2 * fq / 4)) <= 1e-9


def test_first_zero_examples():
    assert phase_space.first_zero(make_state(StateSpec("coherent", alpha=0.5)), 0.3) is None
    r0 = phase_space.first_zero(make_state(StateSpec("cat", beta=2)), math.pi / 2)
    assert r0 == pytest.approx(math.pi / 8, rel=0.05)
    r1 = phase_space.first_zero(make_state(StateSpec("cat", beta=2, n_add=1)), math.pi / 2)
    assert r1 < r0


def test_first_zero_from_wigner_source():
    # W oscillates along p twice as fast as O, so its first zero sits near pi/16
    r = phase_space.first_zero(make_state(StateSpec("cat", beta=2)), math.pi / 2, source="wigner")
    assert r == pytest.approx(math.pi / 16, rel=0.05)
    with pytest.raises(ValueError):
        phase_space.first_zero(fock.vacuum(32), 0.0, source="husimi")


def test_cfa_direction_convergence():
    psi = make_state(StateSpec("cat", beta=2))
    fine = phase_space.fringe_report(psi, 64)
    coarse = phase_space.fringe_report(psi, 32)
    assert abs(fine.cfa - coarse.cfa) / fine.cfa < 0.02
    assert fine.refined_directions > 0


def test_cfa_trends():
    cfa = lambda **kw: phase_space.fringe_report(make_state(StateSpec("cat", **kw)), 32).cfa  # noqa: E731
    assert cfa(beta=2.5) < cfa(beta=2.0)
    assert cfa(beta=2.0, n_add=1) < cfa(beta=2.0)


def test_central_fringe_area_precondition():
    with pytest.raises(ValueError):
        phase_space.central_fringe_area(make_state(StateSpec("cat", beta=2)), 32)
    psi = make_state(StateSpec("cat", beta=2, n_add=2))
    rep = phase_space.fringe_report(psi, 32)
    assert rep.zero_fraction >= 0.9
    assert phase_space.central_fringe_area(psi, 32) == rep.cfa
    data = rep.to_dict()
    assert data["cfa"] > 0 and all(r > 0 for _, r in data["lambda_zero"])


def test_phase_space_refuses_flagged_states():
    psi = build_state(StateSpec("coherent", alpha=1.7), 16, allow_flagged=True)
    with pytest.raises(fock.TruncationError):
        phase_space.overlap_field(psi, 0.1)
