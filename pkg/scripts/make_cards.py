#!/usr/bin/env python3
"""Render the fiducial tag for every fragment in a library as PGM files,
ready to print onto physical cards."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from promptstage.arena import render_tag
from promptstage.prompts import load_library
from promptstage.raster import save_pgm


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--library", default="configs/library.json")
    parser.add_argument("--out", default="cards")
    parser.add_argument("--size", type=int, default=240, help="tag side in px (multiple of 6)")
    args = parser.parse_args()

    library = load_library(args.library)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fragment in library.fragments:
        path = out / f"card_{fragment.id:05d}_{fragment.text.replace(' ', '_')}.pgm"
        save_pgm(render_tag(fragment.id, args.size), path)
        print(f"{fragment.label:>12} (id {fragment.id}) -> {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
