"""Command line entry point: sbm-plot <kind> --in <files> --out <path>."""
from __future__ import annotations

import argparse
import os
import sys

from .figures import PLOTTERS, SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sbm-plot", description=__doc__)
    parser.add_argument("kind", choices=sorted(PLOTTERS))
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input result file(s) in the documented schema")
    parser.add_argument("--out", required=True, help="output figure path (.png or .svg)")
    args = parser.parse_args(argv)
    try:
        series = PLOTTERS[args.kind](args.inputs, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({os.path.getsize(args.out)} bytes)")
    for name in series:
        print(f"  series: {name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
