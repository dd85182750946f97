"""Command-line entry point: ``figures render --kind <k> --in <csv...> --out <file>``."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render SVG figures from control-pipeline CSV files.")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure")
    r.add_argument("--kind", required=True, choices=KINDS)
    r.add_argument("--in", dest="inputs", required=True, nargs="+",
                   metavar="CSV", help="input CSV file(s)")
    r.add_argument("--out", required=True, help="output SVG path")
    r.add_argument("--title", default="", help="optional figure title")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs),
                      output=args.out, title=args.title)
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"figures: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
