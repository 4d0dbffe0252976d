"""CLI: embed --frames DIR --gaze CSV --out FILE [--batch N]."""

from __future__ import annotations

import argparse
import sys

from .extractor import embed_frames


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed",
        description="Extract per-frame gaze-patch CNN descriptors into an embeddings file.",
    )
    parser.add_argument("--frames", required=True, help="directory of numbered frame images")
    parser.add_argument("--gaze", required=True, help="gaze CSV (header t,x,y,valid)")
    parser.add_argument("--out", required=True, help="output embeddings file")
    parser.add_argument("--batch", type=int, default=16, help="inference batch size")
    parser.add_argument("--weights", help="local AlexNet state-dict (.pth); random init if absent")
    parser.add_argument("--rate", type=float, default=30.0, help="frame rate (Hz)")
    parser.add_argument("--seed", type=int, default=0, help="seed for the random-init fallback")
    args = parser.parse_args(argv)
    try:
        n = embed_frames(
            args.frames,
            args.gaze,
            args.out,
            weights=args.weights,
            batch=args.batch,
            rate=args.rate,
            seed=args.seed,
        )
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"embedded {n} frames -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
