"""Command-line interface.

Subcommands
-----------
simulate        run a scenario JSON file and write CSV/JSON results
crlb            print estimation lower bounds over an SNR sweep
resolution      print range/velocity resolution for a frame geometry
validate-config check a scenario file and report every problem found
demo            three-close-targets showcase (DFT spectrum + SSR surfaces)

Errors are emitted as one JSON object on stderr and a nonzero exit code.
The output directory may also be set with the OTFS_ISAC_OUT environment
variable; the --out flag wins when both are present.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .coarse import resolution_report
from .config import SystemConfig
from .crlb import crlb_curve
from .exceptions import ConfigValidationError, OtfsIsacError
from .scenario import Scenario, load_scenario
from .experiments import run_scenario

OUT_ENV_VAR = "OTFS_ISAC_OUT"


def _fail(code: str, message: str, details=None) -> int:
    payload = {"error": code, "message": message}
    if details:
        payload["details"] = details
    print(json.dumps(payload), file=sys.stderr)
    return 1


def _resolve_out(args) -> str:
    if args.out is not None:
        return args.out
    return os.environ.get(OUT_ENV_VAR, "results")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    from dataclasses import replace
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ConfigValidationError as exc:
        return _fail("invalid-scenario", f"{args.scenario} failed validation",
                     details=exc.errors)
    except OSError as exc:
        return _fail("io-error", str(exc))
    scenario = _apply_overrides(scenario, args)
    out_dir = os.path.join(_resolve_out(args), scenario.name)
    try:
        paths = run_scenario(scenario, out_dir, trials=args.trials,
                             parallel=args.parallel)
    except OtfsIsacError as exc:
        return _fail("simulation-error", str(exc))
    print(json.dumps({"scenario": scenario.name, "outputs": paths}, indent=2))
    return 0


def _cmd_crlb(args) -> int:
    cfg = SystemConfig(n_doppler=args.N, m_delay=args.M,
                       subcarrier_spacing_hz=args.df, n_rx=args.n_rx)
    rows = crlb_curve(cfg, args.snr_db)
    keys = list(rows[0].keys())
    print(",".join(keys))
    for row in rows:
        print(",".join(repr(float(row[k])) for k in keys))
    return 0


def _cmd_resolution(args) -> int:
    cfg = SystemConfig(n_doppler=args.N, m_delay=args.M,
                       subcarrier_spacing_hz=args.df)
    for key, value in resolution_report(cfg).items():
        print(f"{key} = {value:.6g}")
    return 0


def _cmd_validate_config(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ConfigValidationError as exc:
        return _fail("invalid-scenario", f"{args.scenario} failed validation",
                     details=exc.errors)
    except OSError as exc:
        return _fail("io-error", str(exc))
    print(json.dumps({"valid": True, "scenario": scenario.to_dict()}, indent=2))
    return 0


def _cmd_demo(args) -> int:
    from .scenario import scenario_from_dict
    raw = {
        "name": "demo-three-close-targets",
        "experiment_kind": "demo-spectrum",
        "system": {},
        "targets": [
            {"angle_deg": 12.0, "range_m": 73.48, "velocity_mps": 54.54},
            {"angle_deg": 14.0, "range_m": 64.29, "velocity_mps": -98.17},
            {"angle_deg": 16.0, "range_m": 45.92, "velocity_mps": 76.36},
        ],
        "allocation": {"diagonal_private_bins": 4},
        "estimator": {"n_angles": 1, "peaks_per_angle": 3, "n_solvers": 16},
        "snr_db_values": [20.0],
        "seed": args.seed if args.seed is not None else 0,
    }
    scenario = scenario_from_dict(raw)
    out_dir = os.path.join(_resolve_out(args), scenario.name)
    try:
        paths = run_scenario(scenario, out_dir)
    except OtfsIsacError as exc:
        return _fail("simulation-error", str(exc))
    print(json.dumps({"scenario": scenario.name, "outputs": paths}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otfs-isac",
        description="MIMO OTFS integrated sensing and communication simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("--scenario", required=True, help="scenario JSON path")
    sim.add_argument("--seed", type=int, default=None, help="override the seed")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--trials", type=int, default=None,
                     help="override the trial count")
    sim.add_argument("--parallel", type=int, default=1,
                     help="worker processes (results are identical for any value)")
    sim.set_defaults(func=_cmd_simulate)

    crlb = sub.add_parser("crlb", help="print estimation lower bounds")
    crlb.add_argument("--N", type=int, default=64, help="Doppler bins")
    crlb.add_argument("--M", type=int, default=128, help="delay bins")
    crlb.add_argument("--df", type=float, default=120e3,
                      help="subcarrier spacing in Hz")
    crlb.add_argument("--n-rx", type=int, default=16, help="receive antennas")
    crlb.add_argument("--snr-db", type=float, nargs="+",
                      default=[-20.0, -10.0, 0.0, 10.0, 20.0])
    crlb.set_defaults(func=_cmd_crlb)

    res = sub.add_parser("resolution", help="print frame resolution limits")
    res.add_argument("--N", type=int, default=64, help="Doppler bins")
    res.add_argument("--M", type=int, default=128, help="delay bins")
    res.add_argument("--df", type=float, default=120e3,
                     help="subcarrier spacing in Hz")
    res.set_defaults(func=_cmd_resolution)

    val = sub.add_parser("validate-config", help="validate a scenario file")
    val.add_argument("--scenario", required=True, help="scenario JSON path")
    val.set_defaults(func=_cmd_validate_config)

    demo = sub.add_parser("demo", help="three-close-targets showcase run")
    demo.add_argument("--seed", type=int, default=None)
    demo.add_argument("--out", default=None, help="output directory")
    demo.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OtfsIsacError as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
