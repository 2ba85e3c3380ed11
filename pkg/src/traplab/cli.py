"""``traplab`` command line: seeded experiments with CSV/JSON output and run manifests.

Exit codes: 0 success, 1 runtime failure, 2 usage error (including parameter
domain violations). Values resolve as flags > ``--config`` file > defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__, lab, stable
from .errors import ParameterDomainError, TraplabError
from .model import DEFAULT_GAMMA, DEFAULT_KAPPA, Environment, make_params
from .walk import simulate_to_site, simulate_to_time

SCHEMA_VERSION = 1
DEFAULT_OUT = "traplab-out"


class UsageError(Exception):
    pass


def sci_float(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def sci_int(text) -> int:
    """Integer that may be written in scientific notation (``1e6``)."""
    if isinstance(text, int):
        return text
    try:
        return int(text)
    except (TypeError, ValueError):
        pass
    v = sci_float(text)
    if not math.isfinite(v) or v != int(v):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(v)


def float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [sci_float(v) for v in text]
    return [sci_float(v) for v in str(text).replace(",", " ").split()]


# (dest, type, default, help); None defaults mean "resolved later"
SHARED = [
    ("alpha", sci_float, 0.5, "tail exponent in (0, 1)"),
    ("epsilon", sci_float, 0.25, "drift in (0, 1/2]"),
    ("seed", sci_int, 0, "master seed"),
    ("trials", sci_int, 1000, "number of independent trials"),
    ("workers", sci_int, 1, "worker processes (affects wall-clock only)"),
    ("tolerance", sci_float, None, "pass/fail tolerance (command-specific default)"),
]

COMMANDS = {
    "simulate": [
        ("target_site", sci_int, None, "stop at the first visit to this site"),
        ("target_time", sci_float, None, "stop when the clock passes this time"),
        ("stride", sci_int, 1, "write every stride-th step"),
    ],
    "aging": [
        ("t", sci_float, 1e8, "observation time (>= 16)"),
        ("h", float_list, [2.0], "time ratios h > 1"),
    ],
    "scaling": [
        ("n", float_list, [1e4, 1e6], "scales N"),
        ("reference_size", sci_int, 100_000, "samples of the limit law"),
    ],
    "localization": [
        ("t", sci_float, 1e8, "observation time (>= 16)"),
        ("c_prime", sci_float, None, "exit-distance constant (default from the drift)"),
    ],
    "dynkin": [
        ("t", sci_float, 1e16, "renewal horizon (>= 16)"),
        ("c_prime", sci_float, None, "exit-distance constant (default from the drift)"),
    ],
    "subordinator": [
        ("samples", sci_int, 1_000_000, "stable samples"),
        ("lambda_", sci_float, 1.0, "Laplace argument"),
    ],
    "arcsine-table": [
        ("grid", str, "0:1:0.1", "start:stop:step or comma list of x in [0, 1]"),
    ],
    "envstats": [
        ("n", sci_int, 1_000_000, "horizon n"),
        ("kappa", sci_float, DEFAULT_KAPPA, "gap exponent"),
        ("gamma", sci_float, DEFAULT_GAMMA, "neighbourhood exponent"),
    ],
    "events": [
        ("n", sci_int, 1_000_000, "horizon n"),
        ("kappa", sci_float, DEFAULT_KAPPA, "gap exponent"),
        ("gamma", sci_float, DEFAULT_GAMMA, "neighbourhood exponent"),
        ("c_prime", sci_float, None, "exit-distance constant (default from the drift)"),
    ],
    "hitting": [
        ("n", sci_float, 1e6, "scale N"),
        ("u", sci_float, 1.0, "target site is floor(u N)"),
        ("beta", sci_float, 1.0, "Laplace argument"),
    ],
    "trap-laplace": [
        ("n", sci_int, 1_000_000, "horizon n"),
        ("lambda_", float_list, [0.5, 1.0, 2.0], "Laplace arguments"),
    ],
}

TOLERANCES = {"aging": 0.05, "scaling": 0.05, "localization": 0.8, "dynkin": 0.05, "subordinator": 4.0,
              "envstats": 0.9, "events": 0.9, "hitting": 0.03, "trap-laplace": 0.10}


def _flag(dest: str) -> str:
    return "--" + dest.rstrip("_").replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traplab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"traplab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    for dest, typ, _, help_ in SHARED:
        common.add_argument(_flag(dest), dest=dest, type=typ, default=None, help=help_)
    common.add_argument("--out-dir", dest="out_dir", default=None,
                        help="output directory (default: $TRAPLAB_OUT_DIR or ./traplab-out)")
    common.add_argument("--config", dest="config", default=None, help="JSON file of default values")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, parents=[common])
        for dest, typ, default, help_ in opts:
            if typ is float_list:
                p.add_argument(_flag(dest), dest=dest, type=sci_float, nargs="+", default=None, help=help_)
            else:
                p.add_argument(_flag(dest), dest=dest, type=typ, default=None, help=help_)
    rp = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    rp.add_argument("manifest")
    rp.add_argument("--out-dir", dest="out_dir", default=None)
    rp.add_argument("--workers", dest="workers", type=sci_int, default=None)
    return parser


def resolve(command: str, args: dict, config: dict) -> dict:
    """Flags > config file > defaults, with config values type-checked like flags."""
    specs = {d: (t, v) for d, t, v, _ in SHARED + COMMANDS[command]}
    specs["out_dir"] = (str, os.environ.get("TRAPLAB_OUT_DIR", DEFAULT_OUT))
    unknown = set(config) - set(specs)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    out = {}
    for dest, (typ, default) in specs.items():
        if args.get(dest) is not None:
            out[dest] = args[dest]
        elif dest in config and config[dest] is not None:
            try:
                out[dest] = typ(config[dest])
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"config {dest}: {exc}") from None
        else:
            out[dest] = default
    if out["tolerance"] is None:
        out["tolerance"] = TOLERANCES.get(command)
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _check_counts(cfg: dict) -> None:
    if cfg["trials"] < 1:
        raise ParameterDomainError("trials", cfg["trials"], ">= 1")
    if cfg["workers"] < 1:
        raise ParameterDomainError("workers", cfg["workers"], ">= 1")


def _write_json(path: Path, obj: dict) -> Path:
    path.write_text(json.dumps(obj, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- commands ------------------------------------------------------------------------


def _emit(report: lab.ExperimentReport, out: Path, name: str) -> list[Path]:
    paths = [out / f"{name}.json"]
    report.to_json(paths[0])
    if report.columns:
        paths.append(report.write_csv(out / f"{name}.csv"))
    return paths


def cmd_simulate(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    site, t = cfg["target_site"], cfg["target_time"]
    if (site is None) == (t is None):
        raise UsageError("give exactly one of --target-site and --target-time")
    if cfg["stride"] < 1:
        raise ParameterDomainError("stride", cfg["stride"], ">= 1")
    env_seed, noise_seed = lab.trial_seeds(cfg["seed"], "simulate", 0)
    env = Environment(params.alpha, env_seed)
    if site is not None:
        traj = simulate_to_site(env, params, site, noise_seed)
    else:
        traj = simulate_to_time(env, params, t, noise_seed)
    return [traj.to_csv(out / "trajectory.csv", cfg["stride"])]


def cmd_aging(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.aging_estimate(params, cfg["t"], cfg["h"], cfg["trials"], cfg["seed"], cfg["workers"], cfg["tolerance"])
    return _emit(rep, out, "aging")


def cmd_scaling(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.scaling_check(params, cfg["n"], cfg["trials"], cfg["seed"], cfg["reference_size"],
                            cfg["workers"], cfg["tolerance"])
    return _emit(rep, out, "scaling")


def cmd_localization(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.localization_estimate(params, cfg["t"], cfg["trials"], cfg["seed"], cfg["workers"],
                                    cfg["tolerance"], cfg["c_prime"])
    return _emit(rep, out, "localization")


def cmd_dynkin(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.dynkin_renewal_check(params, cfg["t"], cfg["trials"], cfg["seed"], cfg["workers"],
                                   cfg["tolerance"], cfg["c_prime"])
    return _emit(rep, out, "dynkin")


def cmd_subordinator(cfg: dict, out: Path) -> list[Path]:
    rep = lab.subordinator_laplace(cfg["alpha"], cfg["samples"], cfg["lambda_"], cfg["seed"], cfg["tolerance"])
    path = out / "subordinator.json"
    rep.to_json(path)
    return [path]


def cmd_arcsine_table(cfg: dict, out: Path) -> list[Path]:
    try:
        xs = stable.parse_grid(cfg["grid"])
    except ValueError:
        raise UsageError(f"bad grid {cfg['grid']!r}; use start:stop:step or a comma list") from None
    if not (0.0 < cfg["alpha"] < 1.0):
        raise ParameterDomainError("alpha", cfg["alpha"], "(0, 1)")
    return [stable.write_arcsine_table(out / "arcsine_table.csv", cfg["alpha"], xs)]


def cmd_envstats(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.envstats(params, cfg["n"], cfg["trials"], cfg["seed"], cfg["workers"],
                       kappa=cfg["kappa"], gamma=cfg["gamma"], threshold=cfg["tolerance"])
    return _emit(rep, out, "envstats")


def cmd_events(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.event_frequencies(params, cfg["n"], cfg["trials"], cfg["seed"], cfg["workers"],
                                threshold=cfg["tolerance"], kappa=cfg["kappa"], gamma=cfg["gamma"],
                                c_prime=cfg["c_prime"])
    return _emit(rep, out, "events")


def cmd_hitting(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.hitting_laplace_check(params, cfg["n"], cfg["u"], cfg["beta"], cfg["trials"], cfg["seed"],
                                    cfg["workers"], cfg["tolerance"])
    return _emit(rep, out, "hitting")


def cmd_trap_laplace(cfg: dict, out: Path) -> list[Path]:
    params = make_params(cfg["alpha"], cfg["epsilon"])
    rep = lab.trap_laplace_check(params, cfg["n"], cfg["lambda_"], cfg["trials"], cfg["seed"], cfg["tolerance"])
    return _emit(rep, out, "trap_laplace")


HANDLERS = {
    "simulate": cmd_simulate, "aging": cmd_aging, "scaling": cmd_scaling, "localization": cmd_localization,
    "dynkin": cmd_dynkin, "subordinator": cmd_subordinator, "arcsine-table": cmd_arcsine_table,
    "envstats": cmd_envstats, "events": cmd_events, "hitting": cmd_hitting, "trap-laplace": cmd_trap_laplace,
}


def _derived(cfg: dict) -> dict:
    """Scale constants implied by the resolved values (recorded, not read back)."""
    gamma = cfg.get("gamma", DEFAULT_GAMMA)
    out = {"kappa": cfg.get("kappa", DEFAULT_KAPPA), "gamma": gamma}
    try:
        params = make_params(cfg["alpha"], cfg["epsilon"])
    except ParameterDomainError:
        return out
    c = cfg.get("c_prime")
    out["c_prime"] = lab.default_c_prime(params) if c is None else c
    out["beta_exp"] = lab.default_beta_exp(params.alpha, gamma)
    return out


def execute(command: str, cfg: dict) -> dict:
    """Run one command with fully resolved values; returns the manifest it wrote."""
    if command != "arcsine-table":
        _check_counts(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    paths = HANDLERS[command](cfg, out)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "master_seed": cfg["seed"],
        "parameters": {k: v for k, v in cfg.items() if k not in ("out_dir", "workers")},
        "derived": _derived(cfg),
        "outputs": {p.name: _digest(p) for p in paths},
        "wall_clock_seconds": time.perf_counter() - start,
        "workers": cfg["workers"],
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def replay(manifest_path, out_dir=None, workers=None) -> tuple[bool, dict]:
    """Re-run a manifest; returns (all digests equal, new manifest)."""
    try:
        old = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        command = old["command"]
        params = dict(old["parameters"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {manifest_path}: {exc}") from None
    cfg = resolve(command, {}, params)
    cfg["out_dir"] = out_dir or str(Path(manifest_path).parent / "replay")
    cfg["workers"] = workers or old.get("workers", 1)
    new = execute(command, cfg)
    return new["outputs"] == old["outputs"], new


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        if command == "replay":
            same, new = replay(args["manifest"], args["out_dir"], args["workers"])
            print(json.dumps({"identical": same, "outputs": new["outputs"]}, sort_keys=True))
            return 0 if same else 1
        cfg = resolve(command, args, _load_config(args.pop("config")))
        manifest = execute(command, cfg)
    except (UsageError, ParameterDomainError) as exc:
        parser.exit(2, f"traplab {command}: error: {exc}\n")
    except (TraplabError, OSError, ArithmeticError) as exc:
        print(f"traplab {command}: failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": command, "outputs": manifest["outputs"]}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
