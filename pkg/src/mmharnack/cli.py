"""Command line: ``mmharnack generate | run | emit-plotdata``.

Exit status is 0 on success, 1 for an unreadable or invalid config and 2
when any experiment item failed with a hard error.
"""

import argparse
import json
import sys

from . import experiments
from .errors import ConfigInvalid, InvalidFamilyParams
from .families import FAMILIES, generate
from .graph import save_graph


def _family_params(pairs):
    params = {}
    for pair in pairs:
        key, _, value = pair.partition("=")
        if not value:
            raise InvalidFamilyParams(f"expected key=value, got {pair!r}")
        params[key] = json.loads(value)
    return params


def _generate(args):
    g = generate(args.family, _family_params(args.param))
    if args.out == "-":
        json.dump(g.to_dict(), sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        save_graph(g, args.out)
    return 0


def _run(args):
    source = args.config or args.preset
    report = experiments.run(source, args.out, seed=args.seed, threads=args.threads,
                             tolerance=args.tolerance, max_iterations=args.max_iterations)
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    for e in report["errors"]:
        print(f"error: {e}", file=sys.stderr)
    return 2 if report["errors"] else 0


def _emit(args):
    for path in experiments.emit_plotdata(args.report, args.out):
        print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mmharnack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a benchmark graph as JSON")
    gen.add_argument("family", choices=FAMILIES)
    gen.add_argument("param", nargs="*", help="family parameters as key=value")
    gen.add_argument("--out", default="-", help="output path, '-' for stdout")
    gen.set_defaults(func=_generate)

    run = sub.add_parser("run", help="run an experiment config or preset")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH")
    src.add_argument("--preset", choices=sorted(experiments.PRESETS))
    run.add_argument("--out", default="out", metavar="DIR")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--tolerance", type=float, help="relative gradient tolerance")
    run.add_argument("--max-iterations", type=int)
    run.set_defaults(func=_run)

    emit = sub.add_parser("emit-plotdata", help="long-format CSVs from a report")
    emit.add_argument("report", help="path to report.json")
    emit.add_argument("--out", default="plotdata", metavar="DIR")
    emit.set_defaults(func=_emit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, InvalidFamilyParams, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
