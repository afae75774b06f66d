"""Command-line entry point: simulate / analyze / score / train-highlights."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, PipelineConfig, apply_overrides, parse_config_file
from .highlights import ClipSample, HighlightClass, TrainConfig, load_model, save_model, train_clip_classifier
from .match_model import (
    BoundingBox,
    MalformedRecord,
    NonMonotonicFrameIndex,
    parse_observation_stream,
    serialize_frame,
)
from .pipeline import MatchPipeline, classify_clip_stream
from .simulate import (
    InvalidConfig,
    SimConfig,
    corrupt_ground_truth,
    generate_clip_stream,
    generate_ground_truth,
    ground_truth_from_jsonl,
    ground_truth_to_jsonl,
    score_tracks,
)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        n_players=args.players,
        n_referees=args.referees,
        duration_frames=args.duration,
        fps=args.fps,
        seed=args.seed,
        detection_sigma_px=args.detection_sigma,
        miss_probability=args.miss_probability,
        false_positive_rate=args.false_positive_rate,
        embedding_noise=args.embedding_noise,
        number_accuracy=args.number_accuracy,
        keypoint_sigma_px=args.keypoint_sigma,
    )
    try:
        cfg.validate()
    except InvalidConfig as e:
        return _fail(str(e))
    os.makedirs(args.out, exist_ok=True)
    gt = generate_ground_truth(cfg)
    with open(os.path.join(args.out, "frames.jsonl"), "w") as fh:
        for rec in corrupt_ground_truth(gt, cfg):
            fh.write(serialize_frame(rec) + "\n")
    with open(os.path.join(args.out, "ground_truth.jsonl"), "w") as fh:
        for line in ground_truth_to_jsonl(gt):
            fh.write(line + "\n")
    with open(os.path.join(args.out, "clips.jsonl"), "w") as fh:
        for clip in generate_clip_stream(cfg, gt.events):
            fh.write(json.dumps(clip) + "\n")
    print(f"wrote frames.jsonl, ground_truth.jsonl, clips.jsonl to {args.out}")
    return 0


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config_file(fh.read(), cfg)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        overrides[k.strip()] = v.strip()
    return apply_overrides(cfg, overrides)


def cmd_analyze(args) -> int:
    if not os.path.exists(args.input):
        return _fail(f"input file not found: {args.input}")
    try:
        cfg = _load_pipeline_config(args)
    except (ConfigError, OSError) as e:
        return _fail(f"config: {e}")

    os.makedirs(args.output_dir, exist_ok=True)
    highlights = []
    if args.clips:
        if not os.path.exists(args.clips):
            return _fail(f"clip stream not found: {args.clips}")
        if not args.model:
            return _fail("--clips requires --model")
        try:
            model = load_model(args.model)
        except (OSError, ValueError) as e:
            return _fail(f"model: {e}")
        with open(args.clips) as fh:
            highlights = classify_clip_stream(model, fh, cfg.fps)

    tracks_path = os.path.join(args.output_dir, "tracks.jsonl")
    try:
        with open(args.input) as inp, open(tracks_path, "w") as tracks_out:
            pipe = MatchPipeline(cfg, tracks_out)
            for record in parse_observation_stream(inp):
                pipe.process(record)
            summary = pipe.finalize(highlights)
    except (MalformedRecord, NonMonotonicFrameIndex) as e:
        return _fail(f"malformed input: {e}")
    with open(os.path.join(args.output_dir, "summary.json"), "w") as fh:
        fh.write(summary + "\n")
    with open(os.path.join(args.output_dir, "heatmap.csv"), "w") as fh:
        fh.write(pipe.summary.heatmap.to_csv())
    with open(os.path.join(args.output_dir, "highlights.json"), "w") as fh:
        json.dump(
            [
                {"class": c.value, "start_frame": s, "end_frame": e}
                for c, s, e in highlights
            ],
            fh,
        )
        fh.write("\n")
    print(f"processed {pipe.frames_processed} frames -> {args.output_dir}")
    return 0


def cmd_score(args) -> int:
    for path in (args.ground_truth, args.tracks):
        if not os.path.exists(path):
            return _fail(f"file not found: {path}")
    with open(args.ground_truth) as fh:
        gt = ground_truth_from_jsonl(fh)
    tracker_frames: dict[int, list] = {}
    with open(args.tracks) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "track_id" not in obj or obj.get("class") == "ball":
                continue
            tracker_frames.setdefault(obj["frame"], []).append(
                (obj["track_id"], BoundingBox(*obj["bbox"]))
            )
    metrics = score_tracks(gt, tracker_frames)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_train_highlights(args) -> int:
    if not os.path.exists(args.clips):
        return _fail(f"clip stream not found: {args.clips}")
    clips = []
    with open(args.clips) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            label = HighlightClass(obj["label"]) if obj.get("label") else None
            clips.append(
                ClipSample(int(obj["start_frame"]), np.asarray(obj["features"]), label)
            )
    model = train_clip_classifier(
        clips, TrainConfig(args.learning_rate, args.epochs, args.seed, args.l2)
    )
    save_model(model, args.model_out)
    print(f"trained on {len(clips)} clips -> {args.model_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pitchstream",
        description="Streaming soccer match analytics over detector output streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic match with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, default=600, help="frames")
    p.add_argument("--fps", type=int, default=25)
    p.add_argument("--players", type=int, default=11, help="players per team")
    p.add_argument("--referees", type=int, default=1)
    p.add_argument("--detection-sigma", type=float, default=0.0, help="box noise, px")
    p.add_argument("--miss-probability", type=float, default=0.0)
    p.add_argument("--false-positive-rate", type=float, default=0.0)
    p.add_argument("--embedding-noise", type=float, default=0.0)
    p.add_argument("--number-accuracy", type=float, default=1.0)
    p.add_argument("--keypoint-sigma", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="run the full pipeline over a frame stream")
    p.add_argument("--input", required=True, help="frames.jsonl path")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--clips", help="clip feature stream (jsonl)")
    p.add_argument("--model", help="trained highlight model (SMX1)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("score", help="score tracker output against ground truth")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--tracks", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train-highlights", help="train the softmax clip classifier")
    p.add_argument("--clips", required=True, help="labeled clip stream (jsonl)")
    p.add_argument("--model-out", required=True)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--l2", type=float, default=1e-4)
    p.set_defaults(func=cmd_train_highlights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
