"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import collections
import itertools
import random
import time
from pathlib import Path

import pytest
import yaml

from varsets.chat_ingest import Utterance, filter_short, parse_chat_file
from varsets.composer import (
    ALLOWED_RATIOS,
    KIND_VS,
    CompositionConfig,
    compose_dataset,
    compose_dataset_strict,
    leakage_check,
    shuffle_control,
)
from varsets.pipeline import run_pipeline
from varsets.scheduler import schedule_adjacent_batch, verify_schedule
from varsets.vs_detect import anchor_overlap, detect_variation_sets
from varsets.vs_synth import SynthConfig, replay_edits, synthesize_pool, synthesize_variants

from conftest import FIXTURES, make_sources, make_unrelated
from test_scheduler import brute_force_check, build_dataset

BUDGET = 100_000


def report(name: str, ok: bool, detail: str = ""):
    marker = "PASS" if ok else "FAIL"
    print(f"[{marker}] {name}" + (f"  ({detail})" if detail else ""), flush=True)
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def acceptance_pools(big_pools):
    return big_pools


def test_ratio_exactness(acceptance_pools):
    """|vs_member word share - ratio/100| <= 0.005 at every grid ratio; < 30 s."""
    filler, pool = acceptance_pools
    t0 = time.monotonic()
    worst = 0.0
    for ratio in ALLOWED_RATIOS:
        cfg = CompositionConfig(ratio_percent=ratio, word_budget=BUDGET, seed=1001)
        dataset = compose_dataset(filler, pool, cfg)
        counts = dataset.word_counts()
        share = counts["vs_member"] / counts["total"]
        worst = max(worst, abs(share - ratio / 100))
    elapsed = time.monotonic() - t0
    report(
        "ratio exactness (6 ratios, 100k words)",
        worst <= 0.005 and elapsed < 30.0,
        f"max share error {worst:.5f}, {elapsed:.1f}s",
    )


def test_control_pairing(acceptance_pools):
    """Shuffled twin keeps the exact sequence multiset; >=99% of sets lose
    contiguity across 20 seeds."""
    filler, pool = acceptance_pools
    cfg = CompositionConfig(ratio_percent=40, word_budget=BUDGET, seed=1002)
    dataset = compose_dataset(filler, pool, cfg)
    base_multiset = collections.Counter(
        (s.text, s.kind, s.vs_id, s.member_index) for s in dataset.sequences
    )
    total_sets = 0
    contiguous = 0
    multisets_equal = True
    for seed in range(20):
        twin = shuffle_control(dataset, seed)
        twin_multiset = collections.Counter(
            (s.text, s.kind, s.vs_id, s.member_index) for s in twin.sequences
        )
        multisets_equal = multisets_equal and twin_multiset == base_multiset
        by_vs = collections.defaultdict(list)
        for i, s in enumerate(twin.sequences):
            if s.kind == KIND_VS:
                by_vs[s.vs_id].append(i)
        for positions in by_vs.values():
            total_sets += 1
            if positions == list(range(positions[0], positions[0] + len(positions))):
                contiguous += 1
    non_contig = 1 - contiguous / total_sets
    report(
        "control pairing (multiset + non-contiguity over 20 seeds)",
        multisets_equal and non_contig >= 0.99,
        f"multisets_equal={multisets_equal}, non-contiguous {non_contig:.4%}",
    )


def test_adjacency_invariant():
    """1,000 randomized adjacent-batch instances verified twice over."""
    rng = random.Random(1003)
    violations = 0
    for trial in range(1000):
        lengths = [rng.randint(2, 8) for _ in range(rng.randint(0, 10))]
        dataset = build_dataset(lengths, rng.randint(0, 40), seed=trial)
        schedule = schedule_adjacent_batch(dataset, rng.randint(1, 64))
        if brute_force_check(schedule, dataset) or not verify_schedule(schedule, dataset).ok:
            violations += 1
    report("adjacency invariant (1000 randomized instances)", violations == 0,
           f"{violations} violations")


def test_filter_fidelity():
    """'Uh oh.' is filtered out; the three straw utterances survive; the
    detector recovers them as one set skipping the gap."""
    utterances = parse_chat_file(FIXTURES / "straw.cha", keep_tiers={"MOT"}).utterances
    kept = [u.text for u in filter_short(utterances)]
    filtered_ok = kept == ["you wanna straw?", "here's your straw.", "where's the straw?"]
    sets = detect_variation_sets(utterances)
    detect_ok = len(sets) == 1 and sets[0].members == [0, 1, 3]
    report("filter fidelity (short filter + gap-skipping detection)",
           filtered_ok and detect_ok, f"kept={kept}, sets={[s.members for s in sets]}")


def test_detector_quality_planted():
    """100 planted synthetic sets among 10k unrelated utterances."""
    rng = random.Random(1004)
    filler = make_unrelated(10_000, prefix="aq")
    planted = [
        synthesize_variants(src, SynthConfig(seed=5000 + i))
        for i, src in enumerate(make_sources(100))
    ]
    stream: list[Utterance] = []
    truth: list[set[int]] = []
    insert_points = sorted(rng.randint(0, len(filler)) for _ in planted)
    fill_iter = iter(filler)
    pos = 0
    for insert_at, vs in zip(insert_points, planted):
        while pos < insert_at:
            stream.append(next(fill_iter))
            pos += 1
        start = len(stream)
        stream.extend(Utterance(t, "MOT", "planted", len(stream) + k) for k, t in enumerate(vs.texts))
        truth.append(set(range(start, len(stream))))
    stream.extend(fill_iter)

    t0 = time.monotonic()
    detected = detect_variation_sets(stream)
    elapsed = time.monotonic() - t0
    detected_members = [set(vs.members) for vs in detected]
    all_detected = set().union(*detected_members) if detected_members else set()
    planted_indices = set().union(*truth)
    recall = sum(1 for group in truth if any(group <= d for d in detected_members)) / len(truth)
    precision = len(all_detected & planted_indices) / max(1, len(all_detected))
    report(
        "detector quality on planted fixture (10k + 100 sets)",
        recall >= 0.95 and precision >= 0.90 and elapsed < 10.0,
        f"recall {recall:.3f}, precision {precision:.3f}, {elapsed:.1f}s",
    )


def test_synthesizer_statistics():
    """1,000 sets at defaults: question ratio 0.48 +- 0.05, pairwise anchors,
    exact edit-op replay."""
    pool = synthesize_pool(make_sources(1000), SynthConfig(seed=1005))
    assert len(pool) == 1000
    members = [t for vs in pool for t in vs.texts]
    ratio = sum(1 for t in members if t.endswith("?")) / len(members)
    ratio_ok = abs(ratio - 0.48) <= 0.05

    anchors_ok = True
    replay_ok = True
    for vs in pool:
        for a, b in itertools.combinations(vs.texts, 2):
            if not anchor_overlap(a, b).shared:
                anchors_ok = False
        for text, ops in zip(vs.texts, vs.edit_ops):
            if " ".join(replay_edits(vs.texts[0].split(), ops)) != text:
                replay_ok = False
    report(
        "synthesizer statistics (1000 sets at defaults)",
        ratio_ok and anchors_ok and replay_ok,
        f"question ratio {ratio:.3f}, anchors_ok={anchors_ok}, replay_ok={replay_ok}",
    )


@pytest.fixture(scope="module")
def grid_corpus(tmp_path_factory):
    """A CHAT corpus holding ~208k words so the 100k grid has headroom."""
    root = tmp_path_factory.mktemp("grid")
    corpus = root / "cha"
    corpus.mkdir()
    k = 0
    for f in range(8):
        lines = ["@UTF8", "@Begin", "@Participants:\tMOT Mother, CHI Target_Child"]
        for _ in range(6500):
            lines.append(f"*MOT:\tthe v{k}a v{k}b v{k}c .")
            k += 1
        lines.append("@End")
        (corpus / f"grid{f}.cha").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root, corpus


def test_full_grid_determinism(grid_corpus):
    """Re-running the full grid with an identical config yields byte-identical
    artifacts, on a 100k-word budget, in under five minutes."""
    root, corpus = grid_corpus
    config = {
        "corpus_dir": str(corpus),
        "word_budget": BUDGET,
        "ratios": list(ALLOWED_RATIOS),
        "conditions": ["consecutive", "shuffled"],
        "methods": ["sequential_concat", "adjacent_batch"],
        "batch_size": 64,
        "seed": 1007,
        "strict_leakage": True,
        "out_dir": "",
    }
    t0 = time.monotonic()
    manifest_a = run_pipeline(dict(config), out_dir=root / "a")
    manifest_b = run_pipeline(dict(config), out_dir=root / "b")
    elapsed = time.monotonic() - t0
    digests_a = {a["path"]: a["digest"] for a in manifest_a["artifacts"]}
    digests_b = {a["path"]: a["digest"] for a in manifest_b["artifacts"]}
    same_digests = digests_a == digests_b
    same_bytes = all(
        (root / "a" / rel).read_bytes() == (root / "b" / rel).read_bytes()
        for rel in digests_a
    )
    count_ok = len([p for p in digests_a if p.startswith("schedules/")]) == 24
    report(
        "full-grid determinism (100k words, two runs)",
        same_digests and same_bytes and count_ok and elapsed < 300.0,
        f"{len(digests_a)} artifacts, {elapsed:.1f}s",
    )


def test_leakage_clean_grid(acceptance_pools):
    """Strict-leakage composition on unrelated filler: zero natural sets in
    all 12 grid datasets."""
    filler, pool = acceptance_pools
    leaks = {}
    for ratio in ALLOWED_RATIOS:
        cfg = CompositionConfig(ratio_percent=ratio, word_budget=BUDGET, seed=1008)
        dataset, rep = compose_dataset_strict(filler, pool, cfg)
        leaks[f"{ratio}/consecutive"] = rep.natural_vs_found
        twin = shuffle_control(dataset, 1008)
        leaks[f"{ratio}/shuffled"] = leakage_check(twin).natural_vs_found
    clean = all(v == 0 for v in leaks.values())
    report("leakage (12 strict grid datasets)", clean and len(leaks) == 12,
           f"found={sum(leaks.values())}")
