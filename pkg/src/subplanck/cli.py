"""Command-line entry point.

Every subcommand accepts ``--config run.json``; keys in the file use the
option names (with underscores) and explicit flags override them. The merged
effective configuration is written next to the outputs as ``run.json``.

Exit codes: 0 success, 1 failed oracle verification, 2 validation error,
3 truncation flag, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import fock, loci, metrics, oracle, phase_space
from .fock import FockVector, TruncationError
from .states import FAMILIES, StateSpec, build_state, make_state

EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_TRUNCATION, EXIT_SOLVER = 0, 1, 2, 3, 4
# cutoff used for states that stay flagged on the whole ladder (--allow-flagged)
FLAGGED_CUTOFF = 512


class ValidationError(ValueError):
    pass


# --- value parsers ---------------------------------------------------------

def parse_complex(text) -> complex:
    if isinstance(text, (list, tuple)):
        if len(text) != 2:
            raise ValidationError("complex values are [re, im] pairs")
        return complex(float(text[0]), float(text[1]))
    if isinstance(text, (int, float, complex)):
        return complex(text)
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def parse_int_list(text) -> list[int]:
    """'0..2' -> [0, 1, 2]; '1,3' -> [1, 3]; 2 -> [2]."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(v) for v in text]
    text = str(text)
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None


def parse_float_list(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


# --- parser construction ---------------------------------------------------

class _Builder:
    """Adds options with SUPPRESS defaults and remembers the real defaults,
    so that explicit flags can be told apart from config-file values."""

    def __init__(self, parser):
        self.parser = parser
        self.defaults: dict = {}
        self.types: dict = {}

    def add(self, *flags, default=None, **kw):
        action = self.parser.add_argument(*flags, default=argparse.SUPPRESS, **kw)
        self.defaults[action.dest] = default
        if "type" in kw:
            self.types[action.dest] = kw["type"]
        return action


def _common(b: _Builder):
    b.add("--config", help="JSON run configuration; flags override its fields")
    b.add("--outdir", default=".", help="directory for all outputs")
    b.add("--convention", default="appendix", choices=sorted(metrics.CONVENTIONS))
    b.add("--allow-flagged", action="store_true", default=False,
          help="continue past truncation flags")
    b.add("--seed", type=int, default=0)
    b.add("--eps", type=float, default=fock.DEFAULT_EPS, help="guard-band tolerance")


def _state_options(b: _Builder, beta_list: bool = False, n_add_list: bool = False):
    b.add("--family", default="coherent", choices=list(FAMILIES))
    b.add("--alpha", type=parse_complex, default=0j)
    if beta_list:
        b.add("--beta", type=parse_float_list, default=[0.0])
    else:
        b.add("--beta", type=parse_complex, default=0j)
    b.add("--r", type=float, default=0.0)
    b.add("--phi", type=float, default=0.0)
    b.add("--l", type=int, default=0)
    if n_add_list:
        b.add("--n-add", type=parse_int_list, default=[0])
    else:
        b.add("--n-add", type=int, default=0)
    b.add("--n-sub", type=int, default=0)


def _grid_options(b: _Builder):
    b.add("--x-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    b.add("--p-range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    b.add("--points", type=int, default=65, help="grid points per axis (odd keeps the origin)")


def _locus_options(b: _Builder):
    b.add("--pair", default="prstrg-2", choices=list(loci.FREE_PARAMS))
    b.add("--n", type=parse_int_list, default=[0, 1, 2, 3, 4])
    b.add("--source-l", type=int, default=0)
    b.add("--theta-policy", default="fixed", choices=list(loci.THETA_POLICIES))
    b.add("--theta", type=float, default=None, help="generator angle (pair default if omitted)")
    b.add("--beta-phase", type=float, default=None,
          help="argument of the target amplitude in radians (pair default if omitted)")
    b.add("--r-range", type=float, nargs=3, default=None, metavar=("LO", "HI", "STEP"))
    b.add("--alpha-range", type=float, nargs=3, default=None, metavar=("LO", "HI", "STEP"))


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="subplanck",
        description="Photon-added superpositions: states, phase space, QFI loci.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    builders = {}

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        b = _Builder(p)
        _common(b)
        builders[name] = b
        return b

    b = command("state", "build a state and write amplitudes and metrics")
    _state_options(b)
    b.add("--theta", type=float, default=0.0)

    b = command("wigner", "Wigner function on a phase-space grid")
    _state_options(b)
    _grid_options(b)

    b = command("overlap", "displacement overlap O_lambda on a grid or its first zero")
    _state_options(b)
    _grid_options(b)
    b.add("--dir", type=float, default=0.0, help="direction angle for --first-zero")
    b.add("--first-zero", action="store_true", default=False)
    b.add("--search-radius", type=float, default=phase_space.SEARCH_RADIUS)

    b = command("cfa", "central fringe area over amplitudes and photon additions")
    _state_options(b, beta_list=True, n_add_list=True)
    b.add("--directions", type=int, default=64)
    b.add("--search-radius", type=float, default=phase_space.SEARCH_RADIUS)
    b.add("--cfa-source", default="overlap", choices=["overlap", "wigner"])

    b = command("qfi", "displacement QFI of a state")
    _state_options(b)
    b.add("--theta", type=float, default=0.0)
    b.add("--method", default="fock", choices=["fock", "closed-form"])

    b = command("fidelity", "fidelity between two states")
    _state_options(b)
    b.add("--other", default=None, help="second state as a JSON object or file")

    b = command("locus", "solve an equal-QFI locus with fidelities")
    _locus_options(b)

    b = command("figure", "emit a figure dataset")
    b.add("which", choices=list(loci.FIGURES), nargs="?", default="fig3")
    _locus_options(b)
    b.add("--family", default="cat", choices=["cat", "ks_plus", "ks_minus"])
    b.add("--beta", type=parse_float_list, default=[2.0])
    b.add("--l", type=int, default=0)
    b.add("--n-add", type=parse_int_list, default=[0, 1, 2])
    b.add("--directions", type=int, default=64)
    b.add("--cfa-source", default="overlap", choices=["overlap", "wigner"])

    b = command("verify-oracle", "randomized closed-form vs Fock-space comparison")
    b.add("--samples", type=int, default=60)
    b.add("--tol", type=float, default=1e-8)
    b.add("--form", default="printed", choices=list(oracle.FORMS))
    return parser, builders


def merge_config(args: argparse.Namespace, builder: _Builder) -> dict:
    """defaults < config file < explicit flags; unknown config keys are rejected."""
    explicit = {k: v for k, v in vars(args).items() if k != "command"}
    merged = dict(builder.defaults)
    path = explicit.get("config")
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(data) - set(builder.defaults) | ({"config"} & set(data))
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            conv = builder.types.get(key)
            try:
                merged[key] = conv(value) if conv and value is not None else value
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise ValidationError(f"bad value for {key}: {exc}") from None
    merged.update(explicit)
    return merged


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _spec(cfg: dict, **over) -> StateSpec:
    fields = dict(family=cfg["family"], alpha=cfg["alpha"], beta=cfg["beta"], r=cfg["r"],
                  phi=cfg["phi"], l=cfg["l"], n_add=cfg["n_add"], n_sub=cfg["n_sub"])
    fields.update(over)
    return StateSpec(**fields)


def _build(spec: StateSpec, cfg: dict) -> FockVector:
    if cfg["allow_flagged"]:
        try:
            return make_state(spec, cfg["eps"])
        except TruncationError:
            return build_state(spec, FLAGGED_CUTOFF, cfg["eps"], allow_flagged=True)
    return make_state(spec, cfg["eps"])


def _grid(psi: FockVector, cfg: dict) -> phase_space.PhaseGrid:
    grid = phase_space.auto_grid(psi, cfg["points"])
    x_range = tuple(cfg["x_range"]) if cfg["x_range"] else grid.x_range
    p_range = tuple(cfg["p_range"]) if cfg["p_range"] else grid.p_range
    return phase_space.PhaseGrid(x_range, p_range, cfg["points"], cfg["points"])


# --- commands --------------------------------------------------------------

def cmd_state(cfg: dict, out: Path) -> dict:
    spec = _spec(cfg)
    psi = _build(spec, cfg)
    rep = metrics.report(psi, cfg["theta"], cfg["convention"])
    _dump(out / "state.json", {"spec": spec.to_dict(), **psi.to_dict()})
    _dump(out / "metrics.json", rep.to_dict())
    return {"cutoff": psi.cutoff, "tail_mass": psi.tail_mass, **rep.to_dict()}


def _grid_header(path: Path, grid, psi: FockVector, cfg: dict) -> dict:
    header = {"grid": grid.header(), "spec": _spec(cfg).to_dict(), "cutoff": psi.cutoff,
              "convention": cfg["convention"]}
    _dump(path, header)
    return header


def cmd_wigner(cfg: dict, out: Path) -> dict:
    psi = _build(_spec(cfg), cfg)
    grid = phase_space.wigner(psi, _grid(psi, cfg))
    (out / "wigner.csv").write_text(grid.to_csv())
    return _grid_header(out / "wigner.json", grid, psi, cfg)


def cmd_overlap(cfg: dict, out: Path) -> dict:
    psi = _build(_spec(cfg), cfg)
    if cfg["first_zero"]:
        root = phase_space.first_zero(psi, cfg["dir"], cfg["search_radius"])
        result = {"theta": cfg["dir"], "first_zero": root, "search_radius": cfg["search_radius"]}
        _dump(out / "first_zero.json", result)
        return result
    grid = phase_space.overlap_grid(psi, _grid(psi, cfg))
    (out / "overlap.csv").write_text(grid.to_csv())
    return _grid_header(out / "overlap.json", grid, psi, cfg)


def cmd_cfa(cfg: dict, out: Path) -> dict:
    rows = []
    for beta in cfg["beta"]:
        for k in cfg["n_add"]:
            psi = _build(_spec(cfg, beta=beta, n_add=k), cfg)
            rep = phase_space.fringe_report(psi, cfg["directions"], cfg["search_radius"],
                                            cfg["cfa_source"])
            rows.append({"beta": beta, "n_add": k, **rep.to_dict()})
    _dump(out / "cfa.json", rows)
    return {"cfa": [[row["beta"], row["n_add"], row["cfa"]] for row in rows]}


def cmd_qfi(cfg: dict, out: Path) -> dict:
    spec = _spec(cfg)
    if cfg["method"] == "closed-form":
        value = oracle.qfi_closed_form(spec, cfg["theta"], cfg["convention"])
    else:
        value = metrics.qfi_displacement(_build(spec, cfg), cfg["theta"], cfg["convention"])
    var_g = value / metrics.convention_factor(cfg["convention"])
    result = {"qfi": value, "qfi_var_g": var_g, "qfi_x4": 4 * var_g, "theta": cfg["theta"],
              "convention": cfg["convention"], "method": cfg["method"], "spec": spec.to_dict()}
    _dump(out / "qfi.json", result)
    return result


def _load_other(text: str | None) -> StateSpec:
    if not text:
        raise ValidationError("--other is required")
    path = Path(text)
    raw = path.read_text() if not text.lstrip().startswith("{") and path.exists() else text
    try:
        return StateSpec.from_dict(json.loads(raw))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--other is not valid JSON: {exc}") from None


def cmd_fidelity(cfg: dict, out: Path) -> dict:
    a, b = _spec(cfg), _load_other(cfg["other"])
    psi_a, psi_b = _build(a, cfg), _build(b, cfg)
    cutoff = max(psi_a.cutoff, psi_b.cutoff)
    value = metrics.fidelity(psi_a.resized(cutoff), psi_b.resized(cutoff), cfg["eps"])
    result = {"fidelity": value, "cutoff": cutoff, "a": a.to_dict(), "b": b.to_dict()}
    _dump(out / "fidelity.json", result)
    return result


def _locus_config(cfg: dict) -> loci.LocusConfig:
    ranges = {}
    if cfg["r_range"]:
        ranges["r"] = tuple(cfg["r_range"])
    if cfg["alpha_range"]:
        ranges["alpha"] = tuple(cfg["alpha_range"])
    names = loci.FREE_PARAMS[cfg["pair"]]
    unused = set(ranges) - set(names)
    if unused:
        raise ValidationError(f"{cfg['pair']} has no free parameter {sorted(unused)}")
    phase = None
    if cfg["beta_phase"] is not None:
        phase = complex(math.cos(cfg["beta_phase"]), math.sin(cfg["beta_phase"]))
    return loci.LocusConfig(
        pair=cfg["pair"], n_values=tuple(cfg["n"]), free_params=ranges,
        theta_policy=cfg["theta_policy"], theta=cfg["theta"], convention=cfg["convention"],
        beta_phase=phase, source_l=cfg["source_l"],
    )


def _check_locus(manifest: dict, cfg: dict):
    if manifest["rows"] == 0:
        raise loci.SolverError("no grid point admits an equal-QFI solution")
    if manifest["flagged"] and not cfg["allow_flagged"]:
        raise TruncationError(f"{manifest['flagged']} locus points are flagged")


def cmd_locus(cfg: dict, out: Path) -> dict:
    lcfg = _locus_config(cfg)
    manifest = loci.emit_figure_dataset(lcfg, "fig4", out)
    # rename to the locus command's own file names
    (out / "fig4.csv").replace(out / "locus.csv")
    manifest["effective_config"] = _jsonable(cfg)
    (out / "fig4.json").unlink()
    _dump(out / "locus.json", manifest)
    _check_locus(manifest, cfg)
    return {k: manifest[k] for k in ("pair", "rows", "omitted_count", "max_relative_residual")}


def cmd_figure(cfg: dict, out: Path) -> dict:
    which = cfg["which"]
    if which == "fig1":
        fcfg = loci.FringeConfig(family=cfg["family"], betas=tuple(cfg["beta"]),
                                 n_adds=tuple(cfg["n_add"]), l=cfg["l"],
                                 n_directions=cfg["directions"], source=cfg["cfa_source"])
        manifest = loci.emit_figure_dataset(fcfg, which, out,
                                            {"effective_config": _jsonable(cfg)})
        return {"figure": which, "rows": manifest["rows"]}
    manifest = loci.emit_figure_dataset(_locus_config(cfg), which, out,
                                        {"effective_config": _jsonable(cfg)})
    _check_locus(manifest, cfg)
    return {k: manifest[k] for k in ("figure", "pair", "rows", "omitted_count", "beta_phase")}


def cmd_verify_oracle(cfg: dict, out: Path) -> dict:
    results = oracle.verify(cfg["seed"], cfg["samples"], cfg["form"])
    report = oracle.verification_report(results, cfg["tol"])
    _dump(out / "oracle_report.json", report)
    return report


COMMANDS = {
    "state": cmd_state, "wigner": cmd_wigner, "overlap": cmd_overlap, "cfa": cmd_cfa,
    "qfi": cmd_qfi, "fidelity": cmd_fidelity, "locus": cmd_locus, "figure": cmd_figure,
    "verify-oracle": cmd_verify_oracle,
}


def main(argv=None) -> int:
    parser, builders = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    name = args.command
    try:
        cfg = merge_config(args, builders[name])
        out = Path(cfg["outdir"])
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[name](cfg, out)
        _dump(out / "run.json", {"command": name, "config": cfg})
    except TruncationError as exc:
        print(f"truncation: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION
    except loci.SolverError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, TypeError, KeyError) as exc:
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps(_jsonable(result), sort_keys=True))
    if name == "verify-oracle" and not result["passed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
