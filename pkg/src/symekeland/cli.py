"""Command-line entry point.

    symekeland run <config.json | bundled-name>
    symekeland verify {axioms,oracle,pipeline}
    symekeland list-integrands

Exit codes: 0 success, 1 a verification suite failed, 2 invalid config,
3 an invariant was violated during a run.  ``SYMEKELAND_OUTPUT_DIR``
overrides the output directory of ``run``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .config import BUNDLED, load_config
from .errors import ConfigError, SymEkelandError
from .functional import integrand_names, integrand_summary, make_integrand
from .geometry import DomainSpec, Grid

ENV_OUTPUT = "SYMEKELAND_OUTPUT_DIR"
EXIT_OK, EXIT_SUITE, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_run(args) -> int:
    from .ekeland import minimizing_sequence_pipeline
    from .verify import trace_checks

    try:
        cfg = load_config(args.config)
        J = cfg.validate()
        pargs = cfg.pipeline_args()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(os.environ.get(ENV_OUTPUT) or args.output or cfg.outputs.get("dir", "out"))
    stem = cfg.outputs.get("stem") or cfg.name
    try:
        trace = minimizing_sequence_pipeline(
            J, pargs["seq_len"], pargs["eps_schedule"], pargs["rng_seed"],
            probe_count=pargs["probe_count"], step_budget=pargs["step_budget"],
            polar_trials=pargs["polar_trials"])
    except (SymEkelandError, AssertionError) as exc:
        print(f"invariant violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    checks = trace_checks(trace)
    meta = dict(trace.metadata)
    meta["config"] = cfg.to_dict()
    meta["checks"] = [str(c) for c in checks]
    _atomic_write(out_dir / f"{stem}.csv", trace.to_csv())
    _atomic_write(out_dir / f"{stem}.json", json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    for c in checks:
        print(c)
    print(f"wrote {out_dir / (stem + '.csv')} and {out_dir / (stem + '.json')}")
    failed = [c for c in checks if not c.passed]
    if failed:
        print("invariant violated: " + "; ".join(f"{c.label} {c.name}" for c in failed), file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES

    kwargs = {}
    if args.suite in ("axioms", "oracle") and args.cases is not None:
        kwargs["cases"] = args.cases
    checks = SUITES[args.suite](**kwargs)
    for c in checks:
        print(c)
    failed = [c for c in checks if not c.passed]
    total = sum(c.cases for c in checks)
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks passed, {total} cases")
    return EXIT_SUITE if failed else EXIT_OK


def cmd_list(args) -> int:
    grid = Grid.cartesian(DomainSpec.ball(), 8)
    for name in integrand_names():
        j = make_integrand(name, grid)
        print(f"{name}\tp={j.growth.p}\tradial={j.radial_flag}\t{integrand_summary(name)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symekeland", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the minimizing-sequence pipeline from a config")
    r.add_argument("config", help=f"path to a JSON config or a bundled name {BUNDLED}")
    r.add_argument("-o", "--output", help=f"output directory (overridden by ${ENV_OUTPUT})")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("suite", choices=("axioms", "oracle", "pipeline"))
    v.add_argument("--cases", type=int, default=None, help="random cases per check")
    v.set_defaults(func=cmd_verify)
    li = sub.add_parser("list-integrands", help="list registered integrands")
    li.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
