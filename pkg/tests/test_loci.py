import csv
import io
import json
import math

import pytest

from subplanck import loci
from subplanck.loci import FringeConfig, LocusConfig, emit_figure_dataset, fidelity_sweep, solve_equal_qfi
from subplanck.states import PairSpec, make_state, parity_expectation, resolve_pair


def test_config_defaults_and_validation():
    cfg = LocusConfig("prstrg-1")
    assert cfg.free_params == {"r": (0.0, 1.2, 0.02), "alpha": (0.1, 2.5, 0.05)}
    assert cfg.theta == pytest.approx(math.pi / 4)
    assert cfg.beta_phase == pytest.approx(complex(math.cos(math.pi / 4), math.sin(math.pi / 4)))
    assert len(cfg.grid()) == 61 * 49
    for bad in (
        dict(pair="prstrg-7"),
        dict(pair="prstrg-2", free_params={"r": (0, 1, 0)}),
        dict(pair="prstrg-2", free_params={"r": (1, 0, 0.1)}),
        dict(pair="prstrg-2", free_params={"alpha": (0, 1, 0.1)}),
        dict(pair="prstrg-2", theta_policy="random"),
        dict(pair="prstrg-2", n_values=()),
        dict(pair="prstrg-2", convention="bogus"),
        dict(pair="prstrg-2", beta_phase=2.0),
        dict(pair="trgtrgp-2", source_l=1),
    ):
        with pytest.raises(ValueError):
            LocusConfig(**bad)


def test_grid_is_lexicographic():
    cfg = LocusConfig("prstrg-1", free_params={"r": (0, 0.2, 0.1), "alpha": (1, 1.5, 0.5)})
    assert cfg.grid() == [{"r": r, "alpha": a} for r in (0.0, 0.1, 0.2) for a in (1.0, 1.5)]


def test_config_round_trip():
    cfg = LocusConfig("trgtrgn-1", n_values=(1, 2), free_params={"alpha": (0.5, 1, 0.1)}, source_l=1)
    back = LocusConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest() == cfg.digest()
    with pytest.raises(ValueError):
        LocusConfig.from_dict({**cfg.to_dict(), "colour": 1})


def test_squeezed_vacuum_corner():
    cfg = LocusConfig("prstrg-3", n_values=(0,), free_params={"r": (0.01, 0.03, 0.01)})
    betas = [p.beta for p in solve_equal_qfi(cfg)]
    assert len(betas) == 3 and betas[0] < 0.11
    assert betas == sorted(betas)


def test_target_target_enhancement():
    cfg = LocusConfig("trgtrgE-3", n_values=(1, 2), free_params={"alpha": (0.5, 2.0, 0.25)})
    res = solve_equal_qfi(cfg)
    assert res.omitted_count == 0
    assert all(p.beta > p.params["alpha"] for p in res)


def test_beta_grows_with_added_photons():
    cfg = LocusConfig("prstrg-2", n_values=(0, 1, 2, 3, 4), free_params={"r": (0.5, 0.5, 0.1)})
    betas = [p.beta for p in solve_equal_qfi(cfg)]
    assert len(betas) == 5
    assert all(b2 > b1 for b1, b2 in zip(betas, betas[1:]))


@pytest.mark.parametrize("pair,ranges", [
    ("prstrg-1", {"r": (0.2, 0.6, 0.4), "alpha": (0.6, 1.4, 0.8)}),
    ("prstrg-3", {"r": (0.2, 0.8, 0.3)}),
    ("trgtrgn-1", {"alpha": (0.5, 1.5, 0.5)}),
])
def test_residual_and_parity_at_locus_points(pair, ranges):
    cfg = LocusConfig(pair, n_values=(1, 2, 3), free_params=ranges)
    res = solve_equal_qfi(cfg)
    assert len(res) > 0
    for p in res:
        assert p.residual <= 1e-8 * p.fq
        proposed, target = resolve_pair(PairSpec(pair, p.n), r=p.params.get("r", 0), alpha=p.params.get("alpha", 0),
                                        beta=p.beta, beta_phase=cfg.beta_phase)
        assert parity_expectation(make_state(proposed)) == pytest.approx(
            parity_expectation(make_state(target)), abs=1e-8)


def test_fidelity_sweep_fills_fields():
    cfg = LocusConfig("prstrg-2", n_values=(0, 1), free_params={"r": (0.02, 0.4, 0.19)})
    points = fidelity_sweep(solve_equal_qfi(cfg).points, cfg)
    assert points and all(0 <= p.fidelity <= 1 for p in points)
    assert all(p.mean_n_proposed > 0 and p.mean_n_target > 0 for p in points)
    corner = next(p for p in points if p.n == 0 and p.params["r"] == 0.02)
    assert corner.fidelity > 1 - 1e-6
    assert loci.fidelity_maximum(points, 1).fidelity == max(p.fidelity for p in points if p.n == 1)


def test_non_monotone_target_reports_all_roots():
    cfg = LocusConfig("trgtrgE-3", n_values=(0,), theta=math.pi / 2, free_params={"alpha": (1.0, 1.0, 0.1)})
    res = solve_equal_qfi(cfg)
    assert res.monotone[(0, cfg.theta)] is False
    assert [p.multiplicity for p in res] == [2, 2]
    assert res.points[1].beta == pytest.approx(1.0, abs=1e-9)
    assert all(p.residual <= 1e-8 * p.fq for p in res)


def test_unsolvable_points_are_counted():
    cfg = LocusConfig("prstrg-3", n_values=(0,), beta_phase=1, theta=0.0, free_params={"r": (0.4, 0.6, 0.2)})
    res = solve_equal_qfi(cfg)
    assert len(res) == 0 and res.omitted_count == 2
    assert res.omitted[0]["r"] == 0.4


def test_theta_policies():
    sweep = LocusConfig("trgtrgp-2", n_values=(1,), theta_policy="sweep", theta_grid=(0.0, 1.0),
                        free_params={"alpha": (1.0, 1.0, 0.1)})
    pts = solve_equal_qfi(sweep).points
    assert [p.theta for p in pts] == [0.0, 1.0]
    assert pts[0].beta == pytest.approx(pts[1].beta, rel=1e-7)
    invariant = LocusConfig("trgtrgp-2", n_values=(1,), theta_policy="target-invariant",
                            free_params={"alpha": (1.0, 1.0, 0.1)})
    assert len(solve_equal_qfi(invariant)) == 1
    with pytest.raises(ValueError):
        solve_equal_qfi(LocusConfig("trgtrgE-3", n_values=(1,), theta_policy="target-invariant",
                                    free_params={"alpha": (1.0, 1.0, 0.1)}))


def test_convention_invariance():
    kw = dict(n_values=(1, 2), free_params={"r": (0.3, 0.9, 0.3)})
    a = solve_equal_qfi(LocusConfig("prstrg-2", convention="appendix", **kw))
    b = solve_equal_qfi(LocusConfig("prstrg-2", convention="intro", **kw))
    assert [p.beta for p in a] == pytest.approx([p.beta for p in b], abs=1e-7)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("SUBPLANCK_THREADS", "3")
    assert loci.worker_count() == 3
    cfg = LocusConfig("trgtrgE-3", n_values=(1,), free_params={"alpha": (0.5, 1.5, 0.5)})
    assert [p.beta for p in solve_equal_qfi(cfg)] == [p.beta for p in solve_equal_qfi(cfg, workers=1)]
    monkeypatch.setenv("SUBPLANCK_THREADS", "many")
    with pytest.raises(ValueError):
        loci.worker_count()


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


def test_fig3_dataset(tmp_path):
    cfg = LocusConfig("prstrg-2", n_values=(0, 1, 2), free_params={"r": (0.0, 0.3, 0.1)})
    manifest = emit_figure_dataset(cfg, "fig3", tmp_path / "a")
    rows = read_csv(tmp_path / "a" / "fig3.csv")
    assert rows[0] == ["n", "r", "beta", "fq", "fidelity"]
    assert len(rows) - 1 == 3 * 4 - manifest["omitted_count"] + manifest["multiple_roots"] // 2
    assert [(int(r[0]), float(r[1])) for r in rows[1:]] == sorted((int(r[0]), float(r[1])) for r in rows[1:])
    assert all(len(v.split("e")[0].replace("-", "").replace(".", "").lstrip("0")) <= 17 for r in rows[1:] for v in r)
    assert manifest["config_hash"] == cfg.digest()
    assert manifest["convention"] == "appendix" and manifest["theta_policy"] == "fixed"
    emit_figure_dataset(cfg, "fig3", tmp_path / "b")
    assert (tmp_path / "a" / "fig3.csv").read_bytes() == (tmp_path / "b" / "fig3.csv").read_bytes()
    assert (tmp_path / "a" / "fig3.json").read_bytes() == (tmp_path / "b" / "fig3.json").read_bytes()


def test_fig2_dataset(tmp_path):
    cfg = LocusConfig("trgtrgp-2", n_values=(1, 2), free_params={"alpha": (0.5, 1.5, 0.5)})
    manifest = emit_figure_dataset(cfg, "fig2", tmp_path)
    assert manifest["max_relative_residual"] <= 1e-8
    rows = read_csv(tmp_path / "fig2.csv")
    assert rows[0] == ["n", "alpha", "beta", "fq", "fidelity"]
    ks = emit_figure_dataset(LocusConfig("trgtrgn-1", n_values=(1,), free_params={"alpha": (1, 1, 0.1)}),
                             "fig2", tmp_path / "n1")
    assert ks["beta_phase_arg"] == pytest.approx(math.pi / 4)


def test_fig4_dataset(tmp_path):
    cfg = LocusConfig("prstrg-2", n_values=(1,), free_params={"r": (0.2, 0.4, 0.2)})
    emit_figure_dataset(cfg, "fig4", tmp_path)
    rows = read_csv(tmp_path / "fig4.csv")
    assert rows[0][-2:] == ["mean_n_proposed", "mean_n_target"]
    assert len(rows) == 3


def test_fig1_dataset(tmp_path):
    cfg = FringeConfig("cat", betas=(2.0,), n_adds=(0, 1, 2), n_directions=32)
    manifest = emit_figure_dataset(cfg, "fig1", tmp_path)
    rows = read_csv(tmp_path / "fig1.csv")[1:]
    cfas = [float(r[2]) for r in rows]
    assert manifest["rows"] == 3
    assert cfas[0] > cfas[1] > cfas[2]
    with pytest.raises(TypeError):
        emit_figure_dataset(LocusConfig("prstrg-2"), "fig1", tmp_path)
    with pytest.raises(ValueError):
        emit_figure_dataset(cfg, "fig9", tmp_path)
