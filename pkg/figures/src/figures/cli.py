"""Standalone entry point: render a figure described by a JSON spec."""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence

from .plot import FiguresError, load_spec, render


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render log-log convergence plots from sweep CSVs.")
    parser.add_argument("--spec", required=True,
                        help="JSON figure specification file")
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.spec)
        annotations = render(spec)
    except (FiguresError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {spec.output}")
    for path, slopes in annotations.items():
        for scheme, slope in sorted(slopes.items()):
            print(f"  {path}: {scheme} slope {slope:g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
