"""Command line: ``run``, ``check`` and ``print-config``.

Exit codes: 0 success, 1 configuration error, 2 simulation divergence,
3 monitor or property failure.  ``AEROGRASP_OUT`` sets the default output
directory of ``run``.
"""

import argparse
import os
import sys

import yaml

from .config import PRESETS, ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAILED = 0, 1, 2, 3
OUT_ENV = "AEROGRASP_OUT"


def _add_config_flags(p):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--scenario", help=f"preset: {', '.join(PRESETS)}")
    p.add_argument("--dt", type=float, help="integration step, s")
    p.add_argument("--duration", type=float, help="simulated time, s (default: end of the last phase)")
    p.add_argument("--no-force-compensation", action="store_true",
                   help="disable the measured-wrench compensation terms")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or none)")
    p.add_argument("--seed", type=int, help="random seed, unsigned 64-bit")
    p.add_argument("--log-every", type=int, help="telemetry decimation in ticks")


def build_parser():
    parser = argparse.ArgumentParser(prog="aerograsp", description="Cooperative aerial grasping simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write telemetry")
    _add_config_flags(run)
    run.add_argument("--quiet", action="store_true", help="print only the check lines")
    pc = sub.add_parser("print-config", help="print the resolved configuration as YAML")
    _add_config_flags(pc)
    from .properties import SUITES

    chk = sub.add_parser("check", help="run property suites")
    chk.add_argument("suites", nargs="*", metavar="SUITE", help=f"one or more of: {', '.join(SUITES)}")
    chk.add_argument("--all", action="store_true", help="run every suite")
    chk.add_argument("--seed", type=int, default=0, help="seed of the random states")
    return parser


def resolve_config(args, env=None):
    """RunConfig from preset, file and flags, in increasing precedence."""
    env = os.environ if env is None else env
    over = {}
    if args.dt is not None:
        over["dt"] = args.dt
    if args.duration is not None:
        over["duration"] = args.duration
    if args.seed is not None:
        over["seed"] = args.seed
    if args.log_every is not None:
        over["log_every"] = args.log_every
    if args.no_force_compensation:
        over["gains"] = {"compensate_forces": False}
    out = args.out if args.out is not None else env.get(OUT_ENV) or None
    if out is not None:
        over["out_dir"] = out
    return load_config(path=args.config, preset=args.scenario, overrides=over)


def cmd_print_config(args, stdout):
    cfg = resolve_config(args)
    yaml.safe_dump(cfg.to_dict(), stdout, sort_keys=False)
    return EXIT_OK


def cmd_run(args, stdout):
    from .sim import run_config

    cfg = resolve_config(args)
    report = run_config(cfg, out_dir=cfg.out_dir)
    s = report.summary
    if not args.quiet:
        print(f"scenario {s['scenario']}: {s['n_ams']} AMs, t_final {s['t_final']:.3f} s, "
              f"completed {s['completed']}", file=stdout)
        for am in s["ams"]:
            f = am["steady_f_e"]
            print(f"  AM {am['index']}: |r_c err| {am['final_r_c_err_norm']:.3g}  "
                  f"|e_R| {am['final_e_R_norm']:.3g}  steady f_e ({f[0]:.3f}, {f[1]:.3f}, {f[2]:.3f}) N",
                  file=stdout)
        if s["object_final_position"] is not None:
            print(f"  object height {s['object_final_position'][2]:.4f} m", file=stdout)
        if cfg.out_dir is not None:
            print(f"  telemetry written to {cfg.out_dir}", file=stdout)
    for c in report.checks:
        print(c.line(), file=stdout)
    if report.result.diverged is not None:
        print(f"diverged: {report.result.diverged}", file=stdout)
        return EXIT_DIVERGED
    if not s["completed"]:
        return EXIT_DIVERGED
    return EXIT_OK if s["checks_passed"] else EXIT_FAILED


def cmd_check(args, stdout):
    from .properties import SUITES

    names = list(SUITES) if args.all else args.suites
    if not names:
        print("check: name at least one suite or pass --all", file=sys.stderr)
        return EXIT_CONFIG
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        print(f"check: unknown suite {unknown[0]!r} (known: {', '.join(SUITES)})", file=sys.stderr)
        return EXIT_CONFIG
    ok = True
    for name in names:
        print(f"== {name}", file=stdout)
        for r in SUITES[name](seed=args.seed):
            ok &= bool(r.passed)
            print(r.line(), file=stdout)
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {"run": cmd_run, "check": cmd_check, "print-config": cmd_print_config}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
