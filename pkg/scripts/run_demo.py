#!/usr/bin/env python3
"""End-to-end demo: simulate a match, train the highlight classifier on its
clip stream, analyze the frame stream, and score the tracks against ground
truth. All artifacts land in a work directory (default: ./demo_out)."""

import argparse
import json
import sys

from pitchstream.cli import main as cli


def run(argv):
    print("$ pitchstream " + " ".join(argv))
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out", help="work directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=int, default=6000, help="frames (25 fps)")
    ap.add_argument("--detection-sigma", type=float, default=1.0, help="box noise, px")
    ap.add_argument("--miss-probability", type=float, default=0.02)
    args = ap.parse_args()

    match = f"{args.out}/match"
    run(
        [
            "simulate",
            "--out", match,
            "--seed", str(args.seed),
            "--duration", str(args.duration),
            "--detection-sigma", str(args.detection_sigma),
            "--miss-probability", str(args.miss_probability),
            "--embedding-noise", "0.05",
            "--number-accuracy", "0.8",
        ]
    )
    run(
        [
            "train-highlights",
            "--clips", f"{match}/clips.jsonl",
            "--model-out", f"{args.out}/highlights.smx",
        ]
    )
    run(
        [
            "analyze",
            "--input", f"{match}/frames.jsonl",
            "--output-dir", f"{args.out}/analysis",
            "--clips", f"{match}/clips.jsonl",
            "--model", f"{args.out}/highlights.smx",
        ]
    )
    run(
        [
            "score",
            "--ground-truth", f"{match}/ground_truth.jsonl",
            "--tracks", f"{args.out}/analysis/tracks.jsonl",
        ]
    )

    with open(f"{args.out}/analysis/summary.json") as fh:
        summary = json.load(fh)
    print("\npossession:", summary["possession"])
    print("highlights:", len(summary["highlights"]), "intervals")
    print(f"outputs in {args.out}/analysis/")


if __name__ == "__main__":
    main()
