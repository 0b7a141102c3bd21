import json
import math

import pytest

from subplanck.cli import main


def run(tmp_path, *argv):
    return main([*argv, "--outdir", str(tmp_path)])


def load(path):
    return json.loads(path.read_text())


def test_state_cat_parity(tmp_path):
    assert run(tmp_path, "state", "--family", "cat", "--beta", "2", "--l", "0") == 0
    rep = load(tmp_path / "metrics.json")
    assert rep["parity"] == pytest.approx(1.0, abs=1e-12)
    state = load(tmp_path / "state.json")
    assert state["spec"]["family"] == "cat"
    assert load(tmp_path / "run.json")["command"] == "state"


def test_state_squeezed_displaced_tail(tmp_path):
    assert run(tmp_path, "state", "--family", "ssd", "--r", "0.5", "--alpha", "1") == 0
    assert load(tmp_path / "state.json")["tail_mass"] < 1e-10


def test_invalid_family_parameter_exits_2(tmp_path):
    assert run(tmp_path, "state", "--family", "ks_plus", "--beta", "1", "--l", "5") == 2
    assert run(tmp_path, "state", "--family", "nonsense") == 2


def test_truncation_exit_3(tmp_path):
    assert run(tmp_path, "state", "--family", "coherent", "--alpha", "40") == 3


def test_solver_exit_4(tmp_path):
    code = run(tmp_path, "locus", "--pair", "prstrg-3", "--beta-phase", "0", "--theta", "0",
               "--n", "0", "--r-range", "0.5", "0.5", "0.1")
    assert code == 4


def test_wigner_origin(tmp_path):
    assert run(tmp_path, "wigner", "--family", "coherent", "--points", "17",
               "--x-range", "-1", "1", "--p-range", "-1", "1") == 0
    header = load(tmp_path / "wigner.json")
    assert header["cutoff"] >= 32
    rows = [line.split(",") for line in (tmp_path / "wigner.csv").read_text().splitlines()[1:]]
    centre = [r for r in rows if float(r[0]) == 0 and float(r[1]) == 0]
    assert float(centre[0][2]) == pytest.approx(2 / math.pi, abs=1e-12)


def test_overlap_first_zero(tmp_path):
    assert run(tmp_path, "overlap", "--family", "cat", "--beta", "2", "--first-zero", "--dir", str(math.pi / 2)) == 0
    assert load(tmp_path / "first_zero.json")["first_zero"] == pytest.approx(0.39278, abs=1e-4)


def test_cfa_decreasing(tmp_path):
    assert run(tmp_path, "cfa", "--family", "cat", "--beta", "2", "--n-add", "0..2",
               "--directions", "32") == 0
    cfas = [row["cfa"] for row in load(tmp_path / "cfa.json")]
    assert cfas[0] > cfas[1] > cfas[2]


@pytest.mark.parametrize("method", ["fock", "closed-form"])
def test_qfi_coherent_intro(tmp_path, method):
    assert run(tmp_path, "qfi", "--family", "coherent", "--alpha", "1", "--convention", "intro",
               "--method", method) == 0
    out = load(tmp_path / "qfi.json")
    assert out["qfi"] == pytest.approx(4.0, rel=1e-10)
    assert out["qfi_var_g"] == pytest.approx(1.0, rel=1e-10)
    assert out["qfi_x4"] == pytest.approx(4.0, rel=1e-10)


def test_fidelity_other(tmp_path):
    other = json.dumps({"family": "coherent", "alpha": [1.0, 0.0]})
    assert run(tmp_path, "fidelity", "--family", "coherent", "--alpha", "1", "--other", other) == 0
    assert load(tmp_path / "fidelity.json")["fidelity"] == pytest.approx(1.0, abs=1e-12)
    assert run(tmp_path, "fidelity", "--family", "coherent") == 2


def test_locus_outputs(tmp_path):
    assert run(tmp_path, "locus", "--pair", "trgtrgE-3", "--n", "1", "--alpha-range", "0.5", "1", "0.5") == 0
    manifest = load(tmp_path / "locus.json")
    assert manifest["rows"] == 2 and manifest["max_relative_residual"] <= 1e-8
    assert (tmp_path / "locus.csv").exists()
    assert run(tmp_path, "locus", "--pair", "trgtrgE-3", "--r-range", "0", "1", "0.1") == 2


def test_figure_fig4(tmp_path):
    assert run(tmp_path, "figure", "fig4", "--pair", "prstrg-2", "--n", "0,1",
               "--r-range", "0.2", "0.4", "0.2") == 0
    header = (tmp_path / "fig4.csv").read_text().splitlines()[0]
    assert header.endswith("mean_n_proposed,mean_n_target")


def test_figure_fig2_phase(tmp_path):
    assert run(tmp_path, "figure", "fig2", "--pair", "trgtrgn-1", "--n", "1",
               "--alpha-range", "1", "1", "0.1") == 0
    assert load(tmp_path / "fig2.json")["beta_phase_arg"] == pytest.approx(math.pi / 4)


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "coherent", "alpha": "2", "theta": 0.0}))
    assert run(tmp_path, "qfi", "--config", str(cfg)) == 0
    assert load(tmp_path / "qfi.json")["spec"]["alpha"][0] == 2.0
    assert run(tmp_path, "qfi", "--config", str(cfg), "--alpha", "0.5") == 0
    assert load(tmp_path / "qfi.json")["spec"]["alpha"][0] == 0.5
    cfg.write_text(json.dumps({"family": "coherent", "colour": "red"}))
    assert run(tmp_path, "qfi", "--config", str(cfg)) == 2


def test_verify_oracle_deterministic(tmp_path, capsys):
    assert run(tmp_path / "a", "verify-oracle", "--seed", "7", "--samples", "8") == 0
    first = (tmp_path / "a" / "oracle_report.json").read_text()
    assert run(tmp_path / "b", "verify-oracle", "--seed", "7", "--samples", "8") == 0
    assert (tmp_path / "b" / "oracle_report.json").read_text() == first
    assert load(tmp_path / "a" / "oracle_report.json")["passed"] is True


def test_verify_oracle_failure_exit_1(tmp_path):
    assert run(tmp_path, "verify-oracle", "--samples", "4", "--tol", "1e-30") == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert main([]) == 2
