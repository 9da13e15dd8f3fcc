#!/usr/bin/env python3
"""Record a synthetic shadow performance, replay it deterministically through
the full pipeline with the mock backend, and save a couple of artifacts.

Run it twice and diff the output directories: they are byte-identical.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from promptstage.pipeline import load_pipeline_config, run_replay, save_artifact_command
from promptstage.sources import SyntheticSource, save_replay
from dataclasses import replace


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--config", default="configs/shadowplay.json")
    parser.add_argument("--frames", type=int, default=120)
    parser.add_argument("--out", default="demo_out")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = load_pipeline_config(args.config)
    width = int(config.frame_source.get("width", 512))
    height = int(config.frame_source.get("height", 512))

    source = SyntheticSource(width, height, seed=7)
    replay_path = out / "performance.npz"
    save_replay(replay_path, [source.read() for _ in range(args.frames)])
    config = replace(config, frame_source={"kind": "replay", "path": str(replay_path)})

    commands = {
        args.frames // 3: [save_artifact_command("one third in", "scripted save")],
        2 * args.frames // 3: [save_artifact_command("two thirds in", "scripted save")],
    }
    report = run_replay(config, commands=commands, artifacts_dir=out / "artifacts")
    snapshot = report.final_snapshot
    print(f"replayed {report.frames} frames, {len(report.request_stream)} requests submitted")
    print(f"scene {snapshot['scene']['index']} ({snapshot['scene']['name']}), "
          f"progression {snapshot['scene']['progression']:.3f}")
    print(f"saved {len(report.artifacts)} artifacts under {out / 'artifacts'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
