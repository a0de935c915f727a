"""Command-line entry point: simulate, sweep, verify-kernel, fit-decay, presets.

Exit codes: 0 success, 2 configuration error, 3 engine abort, 4 diagnostic failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .config import RunConfig, as_q, parse_value, preset, preset_list, validate
from .errors import ConfigError, ResolutionError

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_DIAGNOSTIC = 0, 2, 3, 4


def _load_config(source: str, overrides: list) -> RunConfig:
    if source.startswith("preset:"):
        cfg = preset(source.split(":", 1)[1])
    else:
        try:
            cfg = RunConfig.load(source)
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc}") from exc
    pairs = {}
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        pairs[key.strip()] = value
    return validate(cfg.with_overrides(pairs))


def _parse_axis(spec: str):
    key, sep, values = spec.partition("=")
    if not sep or not values:
        raise ConfigError(f"axis {spec!r} is not key=v1,v2,...")
    return key.strip(), [parse_value(v) for v in values.split(",")]


def cmd_simulate(args) -> int:
    from .harness import run_scenario

    cfg = _load_config(args.config, args.set)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    rep = run_scenario(cfg)
    print(json.dumps({"config_hash": rep.config_hash, "status": rep.status, "abort_reason": rep.abort_reason, "output": rep.output_path, "failures": rep.failures}, indent=1))
    return rep.exit_code


def cmd_sweep(args) -> int:
    from .harness import sweep

    cfg = _load_config(args.config, args.set)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    axes = dict(_parse_axis(a) for a in args.axis or [])
    res = sweep(cfg, axes, workers=args.workers)
    print(res.summary_path)
    return EXIT_OK


def cmd_verify_kernel(args) -> int:
    from .heat import verify_kernel_bounds

    q_list = [as_q(q) for q in args.q.split(",")]
    t_list = [float(t) for t in args.t.split(",")]
    try:
        rep = verify_kernel_bounds(args.beta_max, args.k_max, q_list, t_list, dim=args.dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    except ResolutionError as exc:
        print(f"resolution check failed: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    if args.out:
        rep.to_csv(args.out)
    else:
        rep.to_csv(sys.stdout)
    print(f"implied C0={rep.implied_C0:.6g} M0={rep.implied_M0:.6g} max ratio={rep.max_ratio:.6g} C0 refinement change={rep.c0_refinement_change:.2e}", file=sys.stderr)
    ok = rep.max_ratio <= 1.0 and rep.c0_refinement_change <= 0.01 and rep.max_exponent_error <= 1e-12
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def cmd_fit_decay(args) -> int:
    from .diagnostics import decay_fit, write_decay_csv
    from .storage import read_trajectory

    traj = read_trajectory(args.trajectory)
    beta = tuple(int(b) for b in args.beta.split(",")) if args.beta else (0,) * traj.grid.dim
    window = None
    if args.window:
        lo, hi = (float(x) for x in args.window.split(","))
        window = (lo, hi)
    fits, failed = [], False
    for q in args.q.split(","):
        try:
            fits.append(decay_fit(traj, beta, args.k, as_q(q), window))
        except ValueError as exc:
            print(f"q={q}: {exc}", file=sys.stderr)
            failed = True
    write_decay_csv(fits, args.out or sys.stdout)
    return EXIT_DIAGNOSTIC if failed or not fits else EXIT_OK


def cmd_presets(args) -> int:
    for name, desc in preset_list():
        print(f"{name:24s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pkslab", description="Pseudo-spectral chemotaxis simulator and verification harness")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario from a config file or preset:<name>")
    s.add_argument("config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key")
    s.add_argument("--output-dir")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("sweep", help="run a Cartesian parameter sweep")
    s.add_argument("config")
    s.add_argument("--axis", action="append", metavar="KEY=V1,V2", help="sweep axis over a dotted config key")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("verify-kernel", help="check heat-kernel derivative norms against factorial bounds")
    s.add_argument("--beta-max", type=int, required=True)
    s.add_argument("--k-max", type=int, required=True)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--q", default="1,4/3,2,4,inf")
    s.add_argument("--t", default="0.1,1,10")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_verify_kernel)

    s = sub.add_parser("fit-decay", help="fit norm decay exponents on a stored trajectory")
    s.add_argument("trajectory")
    s.add_argument("--beta", help="comma-separated multi-index (default zero)")
    s.add_argument("--k", type=int, default=0)
    s.add_argument("--q", default="2,4,inf")
    s.add_argument("--window", help="t_lo,t_hi (default [1, validity horizon])")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_fit_decay)

    s = sub.add_parser("presets", help="list built-in scenarios")
    s.set_defaults(fn=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
