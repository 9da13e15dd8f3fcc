#!/usr/bin/env python3
"""Batch-test fragments the way a prompt-crafting session would: run every
fragment alone and in pairs, then rank how much each one changes the output
and how strongly it dominates combinations.

Defaults use the mock backend, so the whole exploration runs offline; point
--base-url at a real generation server for the real thing.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from promptstage.backend import GenerationParams, HttpBackend, MockBackend
from promptstage.craft import MatrixSpec, build_jobs, fragment_effect_scores, run_batch
from promptstage.prompts import load_library, load_meta_prompt


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--library", default="configs/library.json")
    parser.add_argument("--meta", default="configs/meta.json")
    parser.add_argument("--seeds", default="1001,1002")
    parser.add_argument("--out", default="exploration_out")
    parser.add_argument("--parallel", type=int, default=2)
    parser.add_argument("--base-url", default=None)
    args = parser.parse_args()

    library = load_library(args.library)
    meta = load_meta_prompt(args.meta)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    params = GenerationParams(width=256, height=256)
    backend = HttpBackend(args.base_url, timeout_s=120.0) if args.base_url else MockBackend()

    # singles and pairs in one manifest, so presence pairs exist for scoring
    jobs = build_jobs(MatrixSpec(library=library, combo_size=1, meta_prompts=(meta,),
                                 seeds=seeds, params=params))
    jobs += build_jobs(MatrixSpec(library=library, combo_size=2, meta_prompts=(meta,),
                                  seeds=seeds, params=params))
    manifest = run_batch(jobs, backend, args.out, parallelism=args.parallel)
    failed = manifest.failed
    print(f"{len(manifest.entries)} jobs, {len(failed)} failed; contact sheet at {args.out}/index.html")

    report = fragment_effect_scores(manifest, args.out)
    (Path(args.out) / "report.json").write_text(json.dumps(report.to_json(), indent=2))
    by_id = {f.id: f for f in library.fragments}
    print("\npresence effect (how much adding the card changes the image):")
    for fid in report.presence_ranking:
        effect = report.effects[fid]
        print(f"  {by_id[fid].label:>12}  {effect.presence_effect:.4f}  ({effect.presence_pairs} pairs)")
    print("\ndominance (high = flattens diversity; consider re-weighting or pruning):")
    for fid in report.dominance_ranking:
        effect = report.effects[fid]
        print(f"  {by_id[fid].label:>12}  {effect.dominance:.4f}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
