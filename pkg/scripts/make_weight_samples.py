#!/usr/bin/env python3
"""Generate weight-sample files for empirical inflow sources.

Two shapes:

    uniform   an exact grid: the same number of values in every bin of the
              given range, useful for analytic cross-checks
    normal    random draws from a truncated normal, the shape of a typical
              flock

Output is one gram value per line, the format scenario files reference via
{"kind": "empirical", "file": "..."}.
"""

import argparse
import random
import sys


def uniform_grid(lower: float, upper: float, bin_width: float, per_bin: int) -> list[float]:
    bins = int(round((upper - lower) / bin_width))
    values = []
    for j in range(per_bin):
        offset = bin_width * (j + 0.5) / per_bin
        for b in range(bins):
            values.append(lower + b * bin_width + offset)
    return values


def truncated_normal(mean: float, stddev: float, lower: float, upper: float,
                     count: int, rng: random.Random) -> list[float]:
    values = []
    while len(values) < count:
        w = rng.gauss(mean, stddev)
        if lower <= w <= upper:
            values.append(w)
    return values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="shape", required=True)

    uni = sub.add_parser("uniform", help="exact per-bin grid")
    uni.add_argument("--lower", type=float, default=100.0)
    uni.add_argument("--upper", type=float, default=300.0)
    uni.add_argument("--bin-width", type=float, default=10.0)
    uni.add_argument("--per-bin", type=int, default=100)

    norm = sub.add_parser("normal", help="truncated normal draws")
    norm.add_argument("--mean", type=float, default=300.0)
    norm.add_argument("--stddev", type=float, default=45.0)
    norm.add_argument("--lower", type=float, default=80.0)
    norm.add_argument("--upper", type=float, default=650.0)
    norm.add_argument("--count", type=int, default=5000)
    norm.add_argument("--seed", type=int, default=0)

    for p in (uni, norm):
        p.add_argument("--out", default="-", help="output file, - for stdout")
    args = parser.parse_args(argv)

    if args.shape == "uniform":
        if args.upper <= args.lower or args.bin_width <= 0 or args.per_bin < 1:
            parser.error("need lower < upper, positive bin width, per-bin >= 1")
        values = uniform_grid(args.lower, args.upper, args.bin_width, args.per_bin)
    else:
        if not 0 <= args.lower < args.upper or args.stddev <= 0 or args.count < 1:
            parser.error("need 0 <= lower < upper, positive stddev, count >= 1")
        values = truncated_normal(
            args.mean, args.stddev, args.lower, args.upper,
            args.count, random.Random(args.seed),
        )

    text = "\n".join(f"{w:.3f}" for w in values) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"{len(values)} weights -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
