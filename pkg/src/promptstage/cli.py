"""Command-line entry points: run (live loop), compose (one-shot prompt),
serve (live loop + control API), batch (matrix exploration)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading

from .backend import HttpBackend, MockBackend, ImmediateDispatcher, ThreadedDispatcher
from .craft import fragment_effect_scores, load_matrix_spec, run_spec
from .pipeline import Pipeline, load_pipeline_config, run_live
from .prompts import WeightedFragment, compose_prompt, load_library, load_meta_prompt
from .server import ControlServer
from .sources import make_source

log = logging.getLogger(__name__)


def _make_backend(config: dict):
    kind = config.get("kind", "mock")
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        return HttpBackend(
            base_url=config["base_url"],
            timeout_s=float(config.get("timeout_s", 10.0)),
        )
    raise SystemExit(f"unknown backend kind {kind!r}")


def _make_pipeline(args) -> tuple[Pipeline, object]:
    config = load_pipeline_config(args.config)
    raw = json.loads(open(args.config).read())
    backend = _make_backend(raw.get("backend", {"kind": "mock"}))
    if isinstance(backend, MockBackend):
        dispatcher = ImmediateDispatcher(backend)
    else:
        dispatcher = ThreadedDispatcher(
            backend, in_flight_limit=int(raw.get("backend", {}).get("in_flight_limit", 1))
        )
    pipeline = Pipeline(config, dispatcher)
    source = make_source(config.frame_source)
    return pipeline, source


def cmd_run(args) -> int:
    pipeline, source = _make_pipeline(args)
    try:
        frames = run_live(pipeline, source, max_frames=args.frames, duration_s=args.duration)
    except KeyboardInterrupt:
        frames = pipeline.frame_index
    snapshot = pipeline.snapshot()
    pipeline.close()
    print(
        f"processed {frames} frames, completed {snapshot['backend']['completed']} generations, "
        f"effective {snapshot['effective_fps']:.2f} fps, "
        f"dropped {snapshot['backend']['dropped_errors']} errors"
    )
    return 0


def cmd_compose(args) -> int:
    library = load_library(args.library)
    meta = load_meta_prompt(args.meta)
    weighted = []
    warnings = []
    for pair in args.ids.split(",") if args.ids else []:
        if not pair:
            continue
        if ":" in pair:
            raw_id, raw_weight = pair.split(":", 1)
            weight = float(raw_weight)
        else:
            raw_id, weight = pair, None
        fragment = library.get(int(raw_id))
        if fragment is None:
            warnings.append(int(raw_id))
            continue
        weighted.append(WeightedFragment(fragment, fragment.default_weight if weight is None else weight))
    composed = compose_prompt(meta, weighted)
    print(
        json.dumps(
            {
                "positive": composed.positive,
                "negative": composed.negative,
                "source_fragment_ids": list(composed.source_fragment_ids),
                "unknown_ids": warnings,
            },
            indent=2,
        )
    )
    if warnings:
        print(f"warning: unknown fragment ids {warnings}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    pipeline, source = _make_pipeline(args)
    host, _, port = args.listen.partition(":")
    server = ControlServer(pipeline, host=host or "127.0.0.1", port=int(port or 0),
                           static_dir=args.static)
    server.start()
    print(f"control API on {server.url}  (GET /state, WS /ws, GET /image/<digest>.png)")
    loop_thread = threading.Thread(
        target=run_live, args=(pipeline, source),
        kwargs={"duration_s": args.duration}, daemon=True,
    )
    loop_thread.start()
    try:
        loop_thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        pipeline.close()
    return 0


def cmd_batch(args) -> int:
    spec = load_matrix_spec(args.spec)
    backend = _make_backend(
        {"kind": "http", "base_url": args.base_url, "timeout_s": args.timeout}
        if args.base_url
        else {"kind": "mock"}
    )
    manifest = run_spec(spec, backend, args.out, parallelism=args.parallel)
    failed = manifest.failed
    print(f"{len(manifest.entries)} jobs: {len(manifest.entries) - len(failed)} succeeded, "
          f"{len(failed)} failed -> {args.out}/manifest.jsonl")
    if args.report:
        report = fragment_effect_scores(manifest, args.out)
        report_path = f"{args.out}/report.json"
        with open(report_path, "w") as fh:
            json.dump(report.to_json(), fh, indent=2)
        print(f"effect report -> {report_path}")
        for fid in report.presence_ranking:
            effect = report.effects[fid]
            print(f"  fragment {fid}: presence_effect={effect.presence_effect:.4f} "
                  f"({effect.presence_pairs} pairs)")
        for fid, effect in sorted(report.effects.items()):
            if effect.presence_effect is None:
                print(f"  fragment {fid}: presence {effect.presence_note}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptstage")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the live pipeline loop")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--frames", type=int, default=None)
    p_run.add_argument("--duration", type=float, default=None)
    p_run.set_defaults(func=cmd_run)

    p_compose = sub.add_parser("compose", help="compose a prompt from fragment ids")
    p_compose.add_argument("--library", required=True)
    p_compose.add_argument("--meta", required=True)
    p_compose.add_argument("--ids", default="", help="id:weight pairs, e.g. 3:0.2,7:0.8")
    p_compose.set_defaults(func=cmd_compose)

    p_serve = sub.add_parser("serve", help="run the loop with the control API")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--listen", default="127.0.0.1:8765")
    p_serve.add_argument("--static", default=None, help="directory with the operator console build")
    p_serve.add_argument("--duration", type=float, default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_batch = sub.add_parser("batch", help="run a fragment/meta/seed matrix")
    p_batch.add_argument("--spec", required=True)
    p_batch.add_argument("--out", required=True)
    p_batch.add_argument("--parallel", type=int, default=1)
    p_batch.add_argument("--report", action="store_true")
    p_batch.add_argument("--base-url", default=None, help="generation API url (default: mock backend)")
    p_batch.add_argument("--timeout", type=float, default=120.0)
    p_batch.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
