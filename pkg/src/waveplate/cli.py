"""Command-line entry point: ``waveplate <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ScenarioConfig, run_scenario

# built-in defaults per subcommand; a --config file or --set overrides them
COMMAND_DEFAULTS = {
    "identity-check": dict(scenario="identity-check", rho_w=0.0, p=1.0, a=0.0, b=0.0,
                           u0=[1.0], w0=[0.01], T=10.0, dt=1e-3),
    "converge": dict(scenario="converge", p=3.0, preset="modal", u0=[1.0, 0.5], T=2.0,
                     dt=5e-4, stride=4, truncations=[4, 8, 16]),
    "perturb": dict(scenario="perturb", p=3.0, a=1.0, q=1.0, u0=[1.0], w0=[0.01],
                    T=5.0, dt=1e-3, stride=10),
    "blowup": dict(scenario="blowup-explore", rho_w=0.0, b=1.0, q=3.0, n_wave=4, n_plate=4,
                   u0=[], w0=[20.0], T=5.0, dt=1e-4, stride=10),
    "basis": dict(scenario="basis"),
    "dump-ops": dict(scenario="dump-ops"),
}


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with a flat set of ScenarioConfig keys")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (value parsed as JSON when possible)")
    common.add_argument("--out-dir", help="directory for CSV/JSON artifacts")
    common.add_argument("--seed", type=int, help="seed for randomized initial-data presets")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")

    parser = argparse.ArgumentParser(
        prog="waveplate", description="Galerkin wave/plate simulator and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common],
                   help="run the scenario named in the config file (--config required)")
    helps = {
        "identity-check": "energy identity in the linear regime",
        "converge": "Cauchy differences across truncations",
        "perturb": "continuous dependence on initial data",
        "blowup": "blow-up exploration with the Volterra majorant",
        "basis": "dump the modal bases as CSV",
        "dump-ops": "dump the assembled operators as CSV",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def make_config(args) -> ScenarioConfig:
    if args.command == "simulate":
        if not args.config:
            raise ValueError("simulate requires --config")
        data = {}
    else:
        data = dict(COMMAND_DEFAULTS[args.command])
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if args.command != "simulate":
            loaded.pop("scenario", None)
        data.update(loaded)
    data.update(_parse_overrides(args.set))
    if args.out_dir:
        data["out_dir"] = args.out_dir
    if args.seed is not None:
        data["seed"] = args.seed
    return ScenarioConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = make_config(args)
    except (ValueError, TypeError, OSError) as exc:
        parser.error(str(exc))
    try:
        summary = run_scenario(config)
    except ValueError as exc:
        parser.error(str(exc))
    if not args.quiet:
        for prop in summary.properties:
            flag = "PASS" if prop["passed"] else "FAIL"
            print(f"[{flag}] {prop['name']}: value={prop['value']} threshold={prop['threshold']}")
        print(f"{summary.scenario}: {'PASS' if summary.passed else 'FAIL'} "
              f"({summary.wall_ms:.0f} ms) -> {config.out_dir}")
    return 0 if summary.passed else 1


if __name__ == "__main__":
    sys.exit(main())
