"""Command-line interface.

    fbsim run <plan> [--device PATH] [--seed N] [--out DIR] [--set k=v] [--jobs N]
    fbsim validate --device PATH
    fbsim scan --axis {fm,phase} [--state NAME] [--points N] [--seed N]
    fbsim tomo --counts CSV --target NAME [--out DIR]
    fbsim qudit --pump {A|B|C|D|l,m} [--seed N] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 scenario error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, FbsimError, ScenarioError
from .pairgen import named_state, read_records
from .runner import (
    PLAN_REGISTRY,
    default_out_dir,
    make_plan,
    packaged_config,
    run,
    run_many,
    validate,
)
from .tomo import estimate_metrics, mle_reconstruct, standard_settings, write_density_matrix


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def _cmd_run(args: argparse.Namespace) -> int:
    names = sorted(PLAN_REGISTRY) if args.plan == "all" else [args.plan]
    plans = [
        make_plan(
            name,
            device_path=args.device,
            seed=args.seed,
            out_dir=args.out,
            overrides=_parse_overrides(args.set or []),
        )
        for name in names
    ]
    results = run_many(plans, jobs=args.jobs)
    for res in results:
        print(f"{res.name}:")
        for f in res.files:
            print(f"  wrote {f}")
        for k, v in res.metrics.items():
            print(f"  {k} = {v}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    diagnostics = validate(args.device)
    if not diagnostics:
        print(f"{args.device}: ok")
        return 0
    for d in diagnostics:
        print(f"{args.device}: {d}")
    return 2


def _cmd_scan(args: argparse.Namespace) -> int:
    name = "fig4_fringe_scan" if args.axis == "fm" else "supp_bell_phi_plus"
    overrides = {"points": args.points}
    device = args.device
    if args.axis == "phase":
        overrides["state"] = args.state
        if device is None and args.state.lower() in {"psi+", "psi-", "01", "10"}:
            device = packaged_config("qubit_psi.toml")
    plan = make_plan(
        name, device_path=device, seed=args.seed, out_dir=args.out,
        overrides=overrides,
    )
    res = run(plan)
    for f in res.files:
        print(f"wrote {f}")
    for k, v in res.metrics.items():
        print(f"{k} = {v}")
    return 0


def _cmd_tomo(args: argparse.Namespace) -> int:
    records = read_records(args.counts)
    settings = standard_settings(
        args.spacing_signal_ghz, args.spacing_idler_ghz, acquisition_s=args.t_acq
    )
    est = mle_reconstruct(records, settings)
    target = named_state(args.target)
    metrics = estimate_metrics(est, target)
    out = Path(args.out or default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    path = out / (Path(args.counts).stem + "_rho.txt")
    write_density_matrix(path, est, metrics, header_comments=[f"target={args.target}"])
    print(f"wrote {path}")
    print(f"fidelity = {metrics.fidelity:.6f}")
    print(f"purity = {metrics.purity:.6f}")
    print(f"entanglement_of_formation = {metrics.entanglement_of_formation:.6f}")
    print(f"converged = {metrics.converged}")
    return 0


def _cmd_qudit(args: argparse.Namespace) -> int:
    if "," in args.pump:
        l, m = (int(v) for v in args.pump.split(","))
        plan = make_plan(
            "fig7_qudit_bell", device_path=args.device, seed=args.seed,
            out_dir=args.out, overrides={"pairs": [(l, m)]},
        )
    else:
        plan = make_plan(
            "fig7_zbasis", device_path=args.device, seed=args.seed,
            out_dir=args.out, overrides={"pump": args.pump},
        )
    res = run(plan)
    for f in res.files:
        print(f"wrote {f}")
    for k, v in res.metrics.items():
        print(f"{k} = {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbsim",
        description="Frequency-bin entangled-photon source simulator",
        epilog="exit codes: 0 success, 2 configuration error, 3 scenario error; "
        "default output directory comes from $FBSIM_OUT",
    )
    parser.add_argument("--version", action="version", version=f"fbsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named experiment plan")
    p_run.add_argument("plan", help=f"plan name or 'all' ({', '.join(sorted(PLAN_REGISTRY))})")
    p_run.add_argument("--device", help="device config TOML (default: packaged)")
    p_run.add_argument("--seed", type=int, default=1)
    p_run.add_argument("--out", help="output directory (default: $FBSIM_OUT or ./fbsim_out)")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a plan parameter")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel plans")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a device config without running")
    p_val.add_argument("--device", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_scan = sub.add_parser("scan", help="interference scan (modulation frequency or phase)")
    p_scan.add_argument("--axis", choices=["fm", "phase"], required=True)
    p_scan.add_argument("--state", default="phi+", help="state for phase scans")
    p_scan.add_argument("--points", type=int, default=0)
    p_scan.add_argument("--seed", type=int, default=1)
    p_scan.add_argument("--device")
    p_scan.add_argument("--out")
    p_scan.set_defaults(func=_cmd_scan)

    p_tomo = sub.add_parser("tomo", help="reconstruct a density matrix from a counts CSV")
    p_tomo.add_argument("--counts", required=True)
    p_tomo.add_argument("--target", required=True, help="e.g. phi-, psi+, 00")
    p_tomo.add_argument("--spacing-signal-ghz", type=float, default=19.0)
    p_tomo.add_argument("--spacing-idler-ghz", type=float, default=19.0)
    p_tomo.add_argument("--t-acq", type=float, default=15.0)
    p_tomo.add_argument("--out")
    p_tomo.set_defaults(func=_cmd_tomo)

    p_q = sub.add_parser("qudit", help="qudit Z-basis matrices or pair Bell scans")
    p_q.add_argument("--pump", required=True,
                     help="ring label (A..D), 'all', or a bin pair like 1,2")
    p_q.add_argument("--seed", type=int, default=1)
    p_q.add_argument("--device")
    p_q.add_argument("--out")
    p_q.set_defaults(func=_cmd_qudit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "points", None) == 0 and args.command == "scan":
        args.points = 161 if args.axis == "fm" else 12
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 3
    except FbsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
