"""Batch exploration of the prompt space: fragment x meta-prompt x seed
matrices, a resumable runner with a content-addressed image store, and
effect scores that help decide which fragments to prune.

The store keys images by request digest, so re-running a spec (or a larger
spec sharing requests) never re-generates what already exists.
"""

from __future__ import annotations

import html
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import (
    BackendError,
    GenerationParams,
    GenerationRequest,
    TXT2IMG,
    request_digest,
    result_to_png_bytes,
)
from .prompts import (
    FragmentLibrary,
    MetaPrompt,
    WeightedFragment,
    compose_prompt,
    library_from_json,
    load_library,
    load_meta_prompt,
    meta_prompt_from_json,
)
from .raster import png_bytes_to_rgb

log = logging.getLogger(__name__)

# initial attempt plus up to three retries
MAX_RETRIES = 3
MAX_ATTEMPTS = MAX_RETRIES + 1


class CraftError(ValueError):
    pass


@dataclass(frozen=True)
class MatrixSpec:
    library: FragmentLibrary
    combo_size: int
    meta_prompts: tuple[MetaPrompt, ...]
    seeds: tuple[int, ...]
    params: GenerationParams = field(default_factory=GenerationParams)
    weight_levels: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "meta_prompts", tuple(self.meta_prompts))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "weight_levels", tuple(self.weight_levels))
        if not (1 <= self.combo_size <= len(self.library)):
            raise CraftError(
                f"combo_size {self.combo_size} must be in [1, {len(self.library)}]"
            )
        if not self.meta_prompts or not self.seeds or not self.weight_levels:
            raise CraftError("meta_prompts, seeds, and weight_levels must be non-empty")


@dataclass(frozen=True)
class BatchJob:
    job_id: str
    fragment_ids: tuple[int, ...]
    weight_level: float
    meta_index: int
    seed: int
    request: GenerationRequest


@dataclass
class ManifestEntry:
    job_id: str
    fragment_ids: tuple[int, ...]
    weight_level: float
    meta_index: int
    seed: int
    request_digest: str
    image_path: str
    status: str  # "success" | "failed"
    cached: bool = False
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "fragment_ids": list(self.fragment_ids),
            "weight_level": self.weight_level,
            "meta_index": self.meta_index,
            "seed": self.seed,
            "request_digest": self.request_digest,
            "image_path": self.image_path,
            "status": self.status,
            "cached": self.cached,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ManifestEntry":
        return cls(
            job_id=data["job_id"],
            fragment_ids=tuple(data["fragment_ids"]),
            weight_level=float(data["weight_level"]),
            meta_index=int(data["meta_index"]),
            seed=int(data["seed"]),
            request_digest=data["request_digest"],
            image_path=data["image_path"],
            status=data["status"],
            cached=bool(data.get("cached", False)),
            error=data.get("error"),
        )


@dataclass
class BatchManifest:
    spec_echo: dict
    entries: list[ManifestEntry]

    @property
    def failed(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.status == "failed"]


def build_jobs(spec: MatrixSpec) -> list[BatchJob]:
    """Every size-combo_size fragment combination, crossed with each
    meta-prompt, seed, and uniform weight level, in deterministic order
    (lexicographic by fragment ids, then meta, seed, weight)."""
    ordered = sorted(spec.library.fragments, key=lambda f: f.id)
    jobs: list[BatchJob] = []
    for combo in itertools.combinations(ordered, spec.combo_size):
        for meta_index, meta in enumerate(spec.meta_prompts):
            for seed in spec.seeds:
                for weight in spec.weight_levels:
                    weighted = [WeightedFragment(f, weight) for f in combo]
                    composed = compose_prompt(meta, weighted)
                    request = GenerationRequest(
                        kind=TXT2IMG,
                        positive=composed.positive,
                        negative=composed.negative,
                        seed=seed,
                        params=spec.params,
                    )
                    ids = tuple(f.id for f in combo)
                    job_id = (
                        f"f{'-'.join(str(i) for i in ids)}_m{meta_index}_s{seed}_w{weight:.2f}"
                    )
                    jobs.append(
                        BatchJob(
                            job_id=job_id,
                            fragment_ids=ids,
                            weight_level=weight,
                            meta_index=meta_index,
                            seed=seed,
                            request=request,
                        )
                    )
    return jobs


def build_matrix(spec: MatrixSpec) -> list[GenerationRequest]:
    return [job.request for job in build_jobs(spec)]


def _spec_echo(spec: MatrixSpec) -> dict:
    return {
        "library": spec.library.name,
        "library_size": len(spec.library),
        "combo_size": spec.combo_size,
        "meta_prompts": [m.template for m in spec.meta_prompts],
        "seeds": list(spec.seeds),
        "weight_levels": list(spec.weight_levels),
        "params": {
            "steps": spec.params.steps,
            "cfg_scale": spec.params.cfg_scale,
            "width": spec.params.width,
            "height": spec.params.height,
            "model_name": spec.params.model_name,
        },
    }


def _run_one(job: BatchJob, backend, images_dir: Path) -> ManifestEntry:
    digest = request_digest(job.request)
    image_path = images_dir / f"{digest}.png"
    rel_path = f"images/{digest}.png"
    if image_path.exists():
        return ManifestEntry(
            job_id=job.job_id,
            fragment_ids=job.fragment_ids,
            weight_level=job.weight_level,
            meta_index=job.meta_index,
            seed=job.seed,
            request_digest=digest,
            image_path=rel_path,
            status="success",
            cached=True,
        )
    last_error = ""
    for attempt in range(MAX_ATTEMPTS):
        try:
            result = backend.generate(job.request)
            image_path.write_bytes(result_to_png_bytes(result))
            return ManifestEntry(
                job_id=job.job_id,
                fragment_ids=job.fragment_ids,
                weight_level=job.weight_level,
                meta_index=job.meta_index,
                seed=job.seed,
                request_digest=digest,
                image_path=rel_path,
                status="success",
            )
        except BackendError as exc:
            last_error = str(exc)
            log.warning("job %s attempt %d failed: %s", job.job_id, attempt + 1, exc)
    return ManifestEntry(
        job_id=job.job_id,
        fragment_ids=job.fragment_ids,
        weight_level=job.weight_level,
        meta_index=job.meta_index,
        seed=job.seed,
        request_digest=digest,
        image_path=rel_path,
        status="failed",
        error=last_error,
    )


def run_batch(jobs: list[BatchJob], backend, out_dir, parallelism: int = 1,
              spec_echo: dict | None = None) -> BatchManifest:
    """Execute jobs with a bounded worker pool; failures are recorded, never
    raised, so a batch always completes with a full manifest."""
    if parallelism < 1:
        raise CraftError("parallelism must be >= 1")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    if parallelism == 1:
        entries = [_run_one(job, backend, images_dir) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            entries = list(pool.map(lambda j: _run_one(j, backend, images_dir), jobs))
    manifest = BatchManifest(spec_echo=spec_echo or {}, entries=entries)
    write_manifest(manifest, out_dir / "manifest.jsonl")
    write_contact_sheet(manifest, out_dir / "index.html")
    return manifest


def write_manifest(manifest: BatchManifest, path) -> None:
    """JSON lines: one spec-echo header line, then one line per entry."""
    lines = [json.dumps({"kind": "spec", **manifest.spec_echo}, sort_keys=True)]
    for entry in manifest.entries:
        lines.append(json.dumps({"kind": "entry", **entry.to_json()}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> BatchManifest:
    spec_echo: dict = {}
    entries: list[ManifestEntry] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        if data.pop("kind", "entry") == "spec":
            spec_echo = data
        else:
            entries.append(ManifestEntry.from_json(data))
    return BatchManifest(spec_echo=spec_echo, entries=entries)


def write_contact_sheet(manifest: BatchManifest, path) -> None:
    """HTML index of the batch in matrix order; no image compositing."""
    cells = []
    for entry in manifest.entries:
        caption = html.escape(
            f"{entry.job_id} [{entry.status}{' cached' if entry.cached else ''}]"
        )
        if entry.status == "success":
            cells.append(
                f'<figure><img src="{entry.image_path}" loading="lazy">'
                f"<figcaption>{caption}</figcaption></figure>"
            )
        else:
            cells.append(f"<figure><div class='failed'>failed</div><figcaption>{caption}</figcaption></figure>")
    body = "\n".join(cells)
    Path(path).write_text(
        "<!doctype html><meta charset='utf-8'><title>batch contact sheet</title>"
        "<style>figure{display:inline-block;margin:4px;text-align:center}"
        "img{width:192px}figcaption{font:11px monospace}"
        ".failed{width:192px;height:192px;background:#fdd;display:flex;align-items:center;justify-content:center}</style>\n"
        f"{body}\n"
    )


# ---------------------------------------------------------------------------
# Fragment effect scoring

def mse_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared pixel difference, normalized to [0, 1]."""
    if a.shape != b.shape:
        raise CraftError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = (a.astype(np.float64) - b.astype(np.float64)) / 255.0
    return float(np.mean(diff * diff))


DISTANCE_METRICS = {"mse": mse_distance}

INSUFFICIENT_DATA = "insufficient data"


@dataclass(frozen=True)
class FragmentEffect:
    fragment_id: int
    presence_effect: float | None
    presence_pairs: int
    dominance: float | None
    dominance_pairs: int

    @property
    def presence_note(self) -> str | None:
        return None if self.presence_effect is not None else INSUFFICIENT_DATA

    @property
    def dominance_note(self) -> str | None:
        return None if self.dominance is not None else INSUFFICIENT_DATA


@dataclass(frozen=True)
class EffectReport:
    distance_metric: str
    effects: dict[int, FragmentEffect]
    presence_ranking: tuple[int, ...]
    dominance_ranking: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "distance_metric": self.distance_metric,
            "fragments": {
                str(fid): {
                    "presence_effect": e.presence_effect,
                    "presence_pairs": e.presence_pairs,
                    "presence_note": e.presence_note,
                    "dominance": e.dominance,
                    "dominance_pairs": e.dominance_pairs,
                    "dominance_note": e.dominance_note,
                }
                for fid, e in sorted(self.effects.items())
            },
            "presence_ranking": list(self.presence_ranking),
            "dominance_ranking": list(self.dominance_ranking),
        }


def fragment_effect_scores(manifest: BatchManifest, base_dir, distance: str = "mse") -> EffectReport:
    """Score each fragment from a manifest of finished jobs.

    presence_effect: mean distance between image pairs whose jobs are
    identical except that one includes the fragment, i.e. how much adding
    the card changes the output. dominance: 1 minus the mean pairwise
    distance among images whose jobs contain the fragment; high when the
    fragment flattens diversity, dragging every combination toward the same
    look. Fragments with no comparable pairs are marked, never dropped.
    """
    if distance not in DISTANCE_METRICS:
        raise CraftError(f"unknown distance metric {distance!r}; have {sorted(DISTANCE_METRICS)}")
    metric = DISTANCE_METRICS[distance]
    base_dir = Path(base_dir)
    successes = [e for e in manifest.entries if e.status == "success"]
    # one image load per distinct digest
    images: dict[str, np.ndarray] = {}
    for entry in successes:
        if entry.request_digest not in images:
            images[entry.request_digest] = png_bytes_to_rgb(
                (base_dir / entry.image_path).read_bytes()
            )

    fragment_ids = sorted({fid for e in manifest.entries for fid in e.fragment_ids})
    # index by (meta, seed, weight, fragment set) for presence-pair lookup
    by_key: dict[tuple, ManifestEntry] = {}
    for entry in successes:
        by_key[(entry.meta_index, entry.seed, entry.weight_level, frozenset(entry.fragment_ids))] = entry

    effects: dict[int, FragmentEffect] = {}
    for fid in fragment_ids:
        presence_distances: list[float] = []
        for entry in successes:
            if fid not in entry.fragment_ids:
                continue
            without = frozenset(entry.fragment_ids) - {fid}
            partner = by_key.get((entry.meta_index, entry.seed, entry.weight_level, without))
            if partner is not None and partner is not entry:
                presence_distances.append(
                    metric(images[entry.request_digest], images[partner.request_digest])
                )
        containing = [e for e in successes if fid in e.fragment_ids]
        pair_distances: list[float] = []
        for a, b in itertools.combinations(containing, 2):
            pair_distances.append(metric(images[a.request_digest], images[b.request_digest]))
        effects[fid] = FragmentEffect(
            fragment_id=fid,
            presence_effect=float(np.mean(presence_distances)) if presence_distances else None,
            presence_pairs=len(presence_distances),
            dominance=float(1.0 - np.mean(pair_distances)) if pair_distances else None,
            dominance_pairs=len(pair_distances),
        )

    presence_ranking = tuple(
        fid
        for fid in sorted(
            (f for f in fragment_ids if effects[f].presence_effect is not None),
            key=lambda f: effects[f].presence_effect,  # type: ignore[arg-type]
            reverse=True,
        )
    )
    dominance_ranking = tuple(
        fid
        for fid in sorted(
            (f for f in fragment_ids if effects[f].dominance is not None),
            key=lambda f: effects[f].dominance,  # type: ignore[arg-type]
            reverse=True,
        )
    )
    return EffectReport(
        distance_metric=distance,
        effects=effects,
        presence_ranking=presence_ranking,
        dominance_ranking=dominance_ranking,
    )


# ---------------------------------------------------------------------------
# Spec file
#
# {"library": <path or inline library>, "combo_size": 2,
#  "meta_prompts": [<path or inline meta>, ...], "seeds": [..],
#  "weight_levels": [1.0], "params": {"steps":, "cfg_scale":, "width":, "height":, "model_name":}}

def matrix_spec_from_json(data: dict, base_dir=".") -> MatrixSpec:
    base = Path(base_dir)
    lib = data["library"]
    library = load_library(base / lib) if isinstance(lib, str) else library_from_json(lib)
    metas = tuple(
        load_meta_prompt(base / m) if isinstance(m, str) else meta_prompt_from_json(m)
        for m in data["meta_prompts"]
    )
    params = GenerationParams(**data.get("params", {}))
    return MatrixSpec(
        library=library,
        combo_size=int(data["combo_size"]),
        meta_prompts=metas,
        seeds=tuple(int(s) for s in data["seeds"]),
        params=params,
        weight_levels=tuple(float(w) for w in data.get("weight_levels", [1.0])),
    )


def load_matrix_spec(path) -> MatrixSpec:
    path = Path(path)
    return matrix_spec_from_json(json.loads(path.read_text()), base_dir=path.parent)


def run_spec(spec: MatrixSpec, backend, out_dir, parallelism: int = 1) -> BatchManifest:
    return run_batch(build_jobs(spec), backend, out_dir, parallelism, spec_echo=_spec_echo(spec))
