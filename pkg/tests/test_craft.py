import json
import random

import pytest

from promptstage.backend import BackendError, GenerationParams, MockBackend, request_digest
from promptstage.craft import (
    BatchManifest,
    CraftError,
    MatrixSpec,
    build_jobs,
    build_matrix,
    fragment_effect_scores,
    load_manifest,
    load_matrix_spec,
    mse_distance,
    run_batch,
    run_spec,
)
from promptstage.prompts import FragmentLibrary, MetaPrompt, PromptFragment

PARAMS = GenerationParams(width=64, height=64)


def library_of(n):
    return FragmentLibrary(
        fragments=tuple(
            PromptFragment(id=i + 1, label=f"F{i + 1}", text=f"term{i + 1}") for i in range(n)
        ),
        name="test",
    )


META = MetaPrompt(template="a hybrid of {fragments}", empty_fallback="instrument")


def spec_of(n=3, combo=2, seeds=(1, 2), metas=(META,), weights=(1.0,)):
    return MatrixSpec(
        library=library_of(n), combo_size=combo, meta_prompts=metas,
        seeds=seeds, params=PARAMS, weight_levels=weights,
    )


class CountingBackend:
    backend_id = "counting-mock"

    def __init__(self, fail_digests=()):
        self.calls = 0
        self.inner = MockBackend()
        self.fail_digests = set(fail_digests)

    def generate(self, request):
        self.calls += 1
        if request_digest(request) in self.fail_digests:
            raise BackendError("injected failure")
        return self.inner.generate(request)


# -- build_matrix ------------------------------------------------------------

def test_matrix_size_three_choose_two():
    requests = build_matrix(spec_of(n=3, combo=2, seeds=(1, 2)))
    assert len(requests) == 6  # C(3,2) * 1 meta * 2 seeds * 1 weight


def test_matrix_combo_one_tests_fragments_individually():
    bare = MetaPrompt(template="{fragments}")
    requests = build_matrix(spec_of(n=4, combo=1, seeds=(5,), metas=(bare,)))
    assert len(requests) == 4
    assert sorted(r.positive for r in requests) == ["term1", "term2", "term3", "term4"]


def test_matrix_deterministic():
    assert build_matrix(spec_of()) == build_matrix(spec_of())


def test_matrix_full_count_formula():
    spec = spec_of(n=4, combo=2, seeds=(1, 2, 3), metas=(META, MetaPrompt(template="{fragments}, alone")),
                   weights=(0.5, 1.0))
    expected = 6 * 2 * 3 * 2  # C(4,2) * metas * seeds * weights
    assert len(build_matrix(spec)) == expected


def test_matrix_ordering_lexicographic():
    jobs = build_jobs(spec_of(n=3, combo=2, seeds=(9, 1)))
    assert [j.fragment_ids for j in jobs[:2]] == [(1, 2), (1, 2)]
    assert [j.seed for j in jobs[:2]] == [9, 1]  # seeds kept in spec order
    assert jobs[2].fragment_ids == (1, 3)


def test_matrix_weight_levels_apply_uniformly():
    jobs = build_jobs(spec_of(n=2, combo=2, seeds=(1,), weights=(0.5,)))
    assert jobs[0].request.positive == "a hybrid of (term1:0.50), (term2:0.50)"


def test_combo_size_larger_than_library_rejected():
    with pytest.raises(CraftError):
        spec_of(n=2, combo=3)


# -- run_batch ----------------------------------------------------------------

def test_batch_completes_and_writes_images(tmp_path):
    backend = CountingBackend()
    manifest = run_spec(spec_of(), backend, tmp_path)
    assert len(manifest.entries) == 6
    assert all(e.status == "success" for e in manifest.entries)
    for entry in manifest.entries:
        assert (tmp_path / entry.image_path).exists()
    assert (tmp_path / "manifest.jsonl").exists()
    assert (tmp_path / "index.html").exists()
    assert backend.calls == 6


def test_batch_records_failures_and_finishes(tmp_path):
    spec = spec_of()
    failing = request_digest(build_jobs(spec)[2].request)
    backend = CountingBackend(fail_digests={failing})
    manifest = run_batch(build_jobs(spec), backend, tmp_path)
    statuses = [e.status for e in manifest.entries]
    assert statuses.count("success") == 5
    assert statuses.count("failed") == 1
    failed = manifest.failed[0]
    assert failed.error == "injected failure"
    # failing job: one attempt plus three retries
    assert backend.calls == 5 + 4


def test_batch_never_loses_jobs(tmp_path):
    spec = spec_of(n=4, combo=2, seeds=(1,))
    jobs = build_jobs(spec)
    fail = {request_digest(jobs[i].request) for i in (0, 3)}
    manifest = run_batch(jobs, CountingBackend(fail_digests=fail), tmp_path)
    assert len(manifest.entries) == len(jobs)
    assert sum(e.status == "success" for e in manifest.entries) + len(manifest.failed) == len(jobs)


def test_rerun_skips_existing_digests(tmp_path):
    spec = spec_of()
    first = CountingBackend()
    run_spec(spec, first, tmp_path)
    assert first.calls == 6
    second = CountingBackend()
    manifest = run_spec(spec, second, tmp_path)
    assert second.calls == 0
    assert all(e.status == "success" for e in manifest.entries)
    assert all(e.cached for e in manifest.entries)


def test_resume_idempotent_across_many_reruns(tmp_path):
    spec = spec_of()
    total_calls = 0
    for _ in range(3):
        backend = CountingBackend()
        run_spec(spec, backend, tmp_path)
        total_calls += backend.calls
    assert total_calls == 6  # distinct digests only


def test_parallel_run_matches_serial(tmp_path):
    spec = spec_of(n=4, combo=2, seeds=(1, 2))
    serial = run_spec(spec, CountingBackend(), tmp_path / "serial")
    parallel = run_spec(spec, CountingBackend(), tmp_path / "parallel", parallelism=4)
    assert [e.request_digest for e in serial.entries] == [e.request_digest for e in parallel.entries]


def test_manifest_round_trip(tmp_path):
    manifest = run_spec(spec_of(), MockBackend(), tmp_path)
    loaded = load_manifest(tmp_path / "manifest.jsonl")
    assert [e.to_json() for e in loaded.entries] == [e.to_json() for e in manifest.entries]
    assert loaded.spec_echo["combo_size"] == 2


def test_contact_sheet_lists_images_in_matrix_order(tmp_path):
    manifest = run_spec(spec_of(), MockBackend(), tmp_path)
    html_text = (tmp_path / "index.html").read_text()
    positions = [html_text.index(e.image_path) for e in manifest.entries]
    assert positions == sorted(positions)


# -- fragment_effect_scores --------------------------------------------------------

def mixed_size_manifest(tmp_path, n=3):
    """Entries for combo sizes 1 and 2 so presence pairs exist."""
    lib = library_of(n)
    backend = MockBackend()
    jobs = build_jobs(MatrixSpec(library=lib, combo_size=1, meta_prompts=(META,),
                                 seeds=(1, 2), params=PARAMS))
    jobs += build_jobs(MatrixSpec(library=lib, combo_size=2, meta_prompts=(META,),
                                  seeds=(1, 2), params=PARAMS))
    return run_batch(jobs, backend, tmp_path)


def test_presence_effect_zero_for_identical_images(tmp_path):
    manifest = mixed_size_manifest(tmp_path)
    # rewrite every image as the same bytes: fragment presence changes nothing
    first = (tmp_path / manifest.entries[0].image_path).read_bytes()
    for entry in manifest.entries:
        (tmp_path / entry.image_path).write_bytes(first)
    report = fragment_effect_scores(manifest, tmp_path)
    for effect in report.effects.values():
        assert effect.presence_effect == 0.0


def test_presence_effects_positive_on_mock_outputs(tmp_path):
    report = fragment_effect_scores(mixed_size_manifest(tmp_path), tmp_path)
    for effect in report.effects.values():
        assert effect.presence_pairs > 0
        assert effect.presence_effect > 0.0
        assert effect.dominance is not None


def test_single_entry_manifest_is_insufficient_data(tmp_path):
    spec = MatrixSpec(library=library_of(2), combo_size=2, meta_prompts=(META,),
                      seeds=(1,), params=PARAMS)
    manifest = run_spec(spec, MockBackend(), tmp_path)
    report = fragment_effect_scores(manifest, tmp_path)
    for effect in report.effects.values():
        assert effect.presence_effect is None
        assert effect.presence_note == "insufficient data"
        assert effect.dominance is None


def test_uniform_size_manifest_has_no_presence_pairs(tmp_path):
    manifest = run_spec(spec_of(), MockBackend(), tmp_path)
    report = fragment_effect_scores(manifest, tmp_path)
    for effect in report.effects.values():
        assert effect.presence_effect is None
        assert effect.dominance is not None  # combos sharing the fragment exist


def test_scores_permutation_invariant(tmp_path):
    manifest = mixed_size_manifest(tmp_path)
    report_a = fragment_effect_scores(manifest, tmp_path)
    shuffled = BatchManifest(
        spec_echo=manifest.spec_echo,
        entries=random.Random(5).sample(manifest.entries, len(manifest.entries)),
    )
    report_b = fragment_effect_scores(shuffled, tmp_path)
    assert report_a.effects == report_b.effects


def test_rankings_sorted_descending(tmp_path):
    report = fragment_effect_scores(mixed_size_manifest(tmp_path), tmp_path)
    presence = [report.effects[f].presence_effect for f in report.presence_ranking]
    assert presence == sorted(presence, reverse=True)
    dominance = [report.effects[f].dominance for f in report.dominance_ranking]
    assert dominance == sorted(dominance, reverse=True)


def test_mse_distance_bounds():
    import numpy as np

    a = np.zeros((4, 4, 3), dtype=np.uint8)
    b = np.full((4, 4, 3), 255, dtype=np.uint8)
    assert mse_distance(a, a) == 0.0
    assert mse_distance(a, b) == 1.0


def test_report_json_serializable(tmp_path):
    report = fragment_effect_scores(mixed_size_manifest(tmp_path), tmp_path)
    text = json.dumps(report.to_json())
    assert "presence_ranking" in text


# -- spec file -------------------------------------------------------------------

def test_load_matrix_spec_with_file_references(tmp_path):
    from promptstage.prompts import library_to_json, meta_prompt_to_json

    (tmp_path / "library.json").write_text(json.dumps(library_to_json(library_of(3))))
    (tmp_path / "meta.json").write_text(json.dumps(meta_prompt_to_json(META)))
    (tmp_path / "spec.json").write_text(
        json.dumps(
            {
                "library": "library.json",
                "combo_size": 2,
                "meta_prompts": ["meta.json"],
                "seeds": [1, 2],
                "params": {"width": 64, "height": 64},
            }
        )
    )
    spec = load_matrix_spec(tmp_path / "spec.json")
    assert len(build_matrix(spec)) == 6
