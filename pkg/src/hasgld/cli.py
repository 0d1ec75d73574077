"""Command-line entry point: ``hasgld run|validate|report``."""
import argparse
import logging
import sys

from .harness import ConfigError, bundled_config, load_config, report, run_experiment


def _resolve(path):
    # "gaussian2d" etc. name a bundled config
    if path.endswith(".json"):
        return path
    return bundled_config(path)


def _cmd_run(args):
    cfg = load_config(_resolve(args.config))
    status, rows = run_experiment(cfg, args.out, args.workers, args.seed_offset)
    failed = sum(r["status"] != "ok" for r in rows)
    out = args.out or cfg.output_dir
    print(f"{len(rows)} cells ({failed} diverged) -> {out}")
    print(report(out))
    return status


def _cmd_validate(args):
    cfg = load_config(_resolve(args.config))
    n = len(cfg.cells())
    print(f"ok: {cfg.experiment}, {len(cfg.samplers)} sampler(s) x {len(cfg.step_sizes)} step size(s) x {len(cfg.seeds)} seed(s) = {n} cells")
    return 0


def _cmd_report(args):
    print(report(args.dir))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hasgld", description="Run HASGLD-SA / SGLD experiment grids.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (sampler, step size, seed) cell of a config")
    run.add_argument("config", help="config JSON path, or the name of a bundled config")
    run.add_argument("--out", help="output directory (default: the config's output_dir)")
    run.add_argument("--workers", type=int, help="parallel cells (default: the config's workers)")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every replicate seed")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=_cmd_validate)

    rep = sub.add_parser("report", help="print the summary table of a finished run")
    rep.add_argument("dir")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
