import json

import numpy as np
import pytest

from pitchstream.cli import main
from pitchstream.config import (
    ConfigError,
    PipelineConfig,
    apply_overrides,
    parse_config_file,
)

D = 32


# -- config file parsing -----------------------------------------------------------


def test_parse_config_defaults_and_comments():
    cfg = parse_config_file(
        """
        # tracker tuning
        max_age = 40   # frames
        appearance_gate = 0.3

        hard_gate_enabled = false
        """
    )
    assert cfg.max_age == 40
    assert cfg.appearance_gate == 0.3
    assert cfg.hard_gate_enabled is False
    assert cfg.fps == 25  # untouched default


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_file("max_agee = 40")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config_file("max_age = fast")
    with pytest.raises(ConfigError):
        parse_config_file("hard_gate_enabled = maybe")


def test_range_checked():
    with pytest.raises(ConfigError):
        parse_config_file("confidence_floor = 1.5")
    with pytest.raises(ConfigError):
        parse_config_file("max_age = 0")


def test_overrides_applied_after_file():
    cfg = parse_config_file("max_age = 40")
    cfg = apply_overrides(cfg, {"max_age": "50", "n_init": "2"})
    assert cfg.max_age == 50 and cfg.n_init == 2
    with pytest.raises(ConfigError):
        apply_overrides(PipelineConfig(), {"nope": "1"})


# -- CLI surface ---------------------------------------------------------------------


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for sub in ("simulate", "analyze", "score", "train-highlights"):
        assert sub in out


def test_missing_input_names_path(tmp_path, capsys):
    rc = main(["analyze", "--input", "/no/such/frames.jsonl", "--output-dir", str(tmp_path)])
    assert rc != 0
    assert "/no/such/frames.jsonl" in capsys.readouterr().err


def test_missing_score_files(tmp_path, capsys):
    rc = main(["score", "--ground-truth", "/no/gt.jsonl", "--tracks", "/no/tracks.jsonl"])
    assert rc != 0
    assert "/no/gt.jsonl" in capsys.readouterr().err


def test_unknown_set_key_fails(tmp_path, capsys):
    frames = tmp_path / "frames.jsonl"
    frames.write_text('{"frame": 0, "detections": [], "keypoints": []}\n')
    rc = main(
        ["analyze", "--input", str(frames), "--output-dir", str(tmp_path / "out"),
         "--set", "bogus_key=1"]
    )
    assert rc != 0
    assert "bogus_key" in capsys.readouterr().err


def test_malformed_input_fails_cleanly(tmp_path, capsys):
    frames = tmp_path / "frames.jsonl"
    frames.write_text("{broken\n")
    rc = main(["analyze", "--input", str(frames), "--output-dir", str(tmp_path / "out")])
    assert rc != 0
    assert "malformed" in capsys.readouterr().err.lower()


# -- end to end ------------------------------------------------------------------------


def write_clips(path, rng, n_per_class=8):
    protos = {"shooting": rng.normal(size=D) * 5, "normal_play": -rng.normal(size=D) * 5}
    start = 0
    with open(path, "w") as fh:
        for label, proto in protos.items():
            for _ in range(n_per_class):
                rows = proto[None, :] + rng.normal(scale=0.1, size=(8, D))
                fh.write(
                    json.dumps(
                        {
                            "start_frame": start,
                            "features": np.round(rows, 5).tolist(),
                            "label": label,
                        }
                    )
                    + "\n"
                )
                start += 200


@pytest.fixture(scope="module")
def match_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("match")
    rc = main(
        ["simulate", "--out", str(d), "--duration", "400", "--players", "4", "--seed", "0"]
    )
    assert rc == 0
    return d


def test_simulate_writes_streams(match_dir):
    for name in ("frames.jsonl", "ground_truth.jsonl", "clips.jsonl"):
        assert (match_dir / name).stat().st_size > 0


def test_end_to_end_outputs(match_dir, tmp_path, capsys):
    rng = np.random.default_rng(0)
    clips = tmp_path / "clips.jsonl"
    write_clips(clips, rng)
    model = tmp_path / "model.smx"
    rc = main(
        ["train-highlights", "--clips", str(clips), "--model-out", str(model),
         "--epochs", "100"]
    )
    assert rc == 0

    out = tmp_path / "out"
    rc = main(
        ["analyze", "--input", str(match_dir / "frames.jsonl"), "--output-dir", str(out),
         "--clips", str(clips), "--model", str(model)]
    )
    assert rc == 0
    for name in ("tracks.jsonl", "summary.json", "heatmap.csv", "highlights.json"):
        assert (out / name).stat().st_size > 0

    # summary round-trips byte-identically through json
    text = (out / "summary.json").read_text().strip()
    doc = json.loads(text)
    assert json.dumps(doc, sort_keys=True, separators=(",", ":")) == text
    assert doc["possession"] == "no data" or abs(
        doc["possession"]["TeamA"] + doc["possession"]["TeamB"] - 1.0
    ) < 1e-9

    # heatmap CSV has the configured shape
    lines = (out / "heatmap.csv").read_text().strip().split("\n")
    assert len(lines) == 14 and all(len(l.split(",")) == 21 for l in lines)

    # highlight intervals only contain detected event classes
    highlights = json.loads((out / "highlights.json").read_text())
    for h in highlights:
        assert h["class"] != "normal_play"

    # scoring runs against the simulator ground truth
    rc = main(
        ["score", "--ground-truth", str(match_dir / "ground_truth.jsonl"),
         "--tracks", str(out / "tracks.jsonl")]
    )
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert metrics["id_switches"] == 0
    assert metrics["mostly_tracked"] >= 0.9
    assert metrics["position_rmse_px"] < 2.0


def test_rerun_byte_identical(match_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = main(
            ["analyze", "--input", str(match_dir / "frames.jsonl"), "--output-dir", str(out)]
        )
        assert rc == 0
        outs.append(
            {
                f: (out / f).read_bytes()
                for f in ("tracks.jsonl", "summary.json", "heatmap.csv", "highlights.json")
            }
        )
    assert outs[0] == outs[1]


def test_config_overrides_change_behavior(match_dir, tmp_path):
    cfg_file = tmp_path / "pipeline.cfg"
    cfg_file.write_text("heatmap_cols = 10\nheatmap_rows = 7\n")
    out = tmp_path / "out"
    rc = main(
        ["analyze", "--input", str(match_dir / "frames.jsonl"), "--output-dir", str(out),
         "--config", str(cfg_file), "--set", "heatmap_rows=5"]
    )
    assert rc == 0
    lines = (out / "heatmap.csv").read_text().strip().split("\n")
    assert len(lines) == 5
    assert all(len(l.split(",")) == 10 for l in lines)


def test_invalid_sim_config_fails(tmp_path, capsys):
    rc = main(["simulate", "--out", str(tmp_path), "--miss-probability", "2.0"])
    assert rc != 0
    assert "miss_probability" in capsys.readouterr().err
