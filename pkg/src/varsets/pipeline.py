"""Full-grid orchestration: ingest -> synth -> compose -> schedule.

One run produces, for each configured ratio, a consecutive dataset and its
shuffled twin, plus one schedule per (dataset, method), all bound together
by a single reproducibility manifest.  Any stage error aborts the run and
removes partial outputs.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import os
import time
from pathlib import Path

from . import __version__
from .chat_ingest import (
    CLEANING_RULES_VERSION,
    Transcript,
    Utterance,
    filter_short,
    ingest_dir,
    read_utterances,
    select_budget,
    write_utterances,
)
from .composer import (
    CompositionConfig,
    Dataset,
    DatasetSequence,
    compose_dataset,
    corpus_stats,
    leakage_check,
    shuffle_control,
    write_dataset,
)
from .scheduler import (
    METHODS,
    schedule_adjacent_batch,
    schedule_sequential_concat,
    verify_schedule,
    write_schedule,
)
from .util import PRNG_NAME, SEED_SCHEME, derive_seed, sha256_hex
from .vs_detect import DetectionConfig, VariationSet, load_stopwords, write_sets
from .vs_synth import SynthConfig, load_lexicon, synthesize_pool

log = logging.getLogger(__name__)

CACHE_ENV = "VARSETS_CACHE_DIR"

_TOP_KEYS = {
    "corpus_dir", "corpus_jsonl", "keep_tiers", "min_words", "word_budget",
    "ratios", "conditions", "methods", "batch_size", "seed", "strict_leakage",
    "leakage_retries", "out_dir", "jobs", "detect", "synth",
}
_DETECT_KEYS = {"anchor_min_shared", "jaccard_min", "max_gap", "min_set_size", "stopwords", "match_speaker"}
_SYNTH_KEYS = {"n_variants", "question_ratio_target", "max_ops_per_variant", "lexicon"}

DEFAULT_CONDITIONS = ("consecutive", "shuffled")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


def validate_config(raw: dict) -> dict:
    """Check the declarative config against the documented schema.

    Unknown keys are errors; defaults are filled for everything optional.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "corpus_dir" not in raw and "corpus_jsonl" not in raw:
        raise ConfigError("config needs corpus_dir or corpus_jsonl")
    for key in ("word_budget", "seed", "out_dir"):
        if key not in raw:
            raise ConfigError(f"config key {key!r} is required")
    detect = dict(raw.get("detect") or {})
    unknown = set(detect) - _DETECT_KEYS
    if unknown:
        raise ConfigError(f"unknown detect keys: {sorted(unknown)}")
    synth = dict(raw.get("synth") or {})
    unknown = set(synth) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    cfg = {
        "corpus_dir": raw.get("corpus_dir"),
        "corpus_jsonl": raw.get("corpus_jsonl"),
        "keep_tiers": raw.get("keep_tiers"),
        "min_words": int(raw.get("min_words", 3)),
        "word_budget": int(raw["word_budget"]),
        "ratios": [int(r) for r in raw.get("ratios", [0, 20, 40, 60, 80, 100])],
        "conditions": list(raw.get("conditions", DEFAULT_CONDITIONS)),
        "methods": list(raw.get("methods", METHODS)),
        "batch_size": int(raw.get("batch_size", 64)),
        "seed": int(raw["seed"]),
        "strict_leakage": bool(raw.get("strict_leakage", True)),
        "leakage_retries": int(raw.get("leakage_retries", 5)),
        "out_dir": str(raw["out_dir"]),
        "jobs": int(raw.get("jobs", 0)),
        "detect": detect,
        "synth": synth,
    }
    for cond in cfg["conditions"]:
        if cond not in DEFAULT_CONDITIONS:
            raise ConfigError(f"unknown condition {cond!r}")
    for method in cfg["methods"]:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
    if cfg["batch_size"] < 1:
        raise ConfigError("batch_size must be >= 1")
    return cfg


def detection_config(detect: dict) -> DetectionConfig:
    kwargs = dict(detect)
    if "stopwords" in kwargs and kwargs["stopwords"]:
        kwargs["stopwords"] = load_stopwords(kwargs["stopwords"])
    elif "stopwords" in kwargs:
        del kwargs["stopwords"]
    return DetectionConfig(**kwargs)


def synth_config(synth: dict, seed: int) -> SynthConfig:
    kwargs = dict(synth)
    if "lexicon" in kwargs and kwargs["lexicon"]:
        kwargs["lexicon"] = load_lexicon(kwargs["lexicon"])
    elif "lexicon" in kwargs:
        del kwargs["lexicon"]
    return SynthConfig(seed=seed, **kwargs)


def _cache_path(key: str) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path / f"ingest-{key}.jsonl"


def load_corpus(cfg: dict) -> tuple[list[Transcript], list[Utterance]]:
    """Load and clean the corpus; returns (transcripts, raw utterances).

    CHAT ingestion results are cached under $VARSETS_CACHE_DIR keyed by the
    raw file bytes, tiers, and cleaning-rule version.
    """
    if cfg.get("corpus_jsonl"):
        utts = read_utterances(cfg["corpus_jsonl"])
        return _group_transcripts(utts), utts
    corpus_dir = cfg["corpus_dir"]
    keep = cfg.get("keep_tiers")
    paths = sorted(Path(corpus_dir).rglob("*.cha"), key=lambda p: p.name)
    hasher_key = sha256_hex(
        "\x1f".join([CLEANING_RULES_VERSION, repr(sorted(keep) if keep else None)]).encode("utf-8")
        + b"".join(p.read_bytes() for p in paths)
    )
    cache = _cache_path(hasher_key)
    if cache is not None and cache.exists():
        log.info("ingest cache hit: %s", cache)
        utts = read_utterances(cache)
        return _group_transcripts(utts), utts
    transcripts = ingest_dir(corpus_dir, keep_tiers=keep)
    utts = [u for t in transcripts for u in t.utterances]
    if cache is not None:
        write_utterances(cache, utts)
    return transcripts, utts


def _group_transcripts(utterances: list[Utterance]) -> list[Transcript]:
    transcripts: list[Transcript] = []
    for utt in utterances:
        if not transcripts or transcripts[-1].file_id != utt.source_file:
            transcripts.append(Transcript(file_id=utt.source_file))
        transcripts[-1].utterances.append(utt)
    return transcripts


def _compose_pair(
    filler_pool: list[Utterance],
    synth_pool: list[VariationSet],
    ratio: int,
    cfg: dict,
    detect_cfg: DetectionConfig,
) -> dict:
    """Compose one ratio's consecutive dataset and shuffled twin, re-seeding
    until the strict leakage gate passes for both."""
    seed = cfg["seed"]
    want_shuffled = "shuffled" in cfg["conditions"]
    retries = cfg["leakage_retries"] if cfg["strict_leakage"] else 0
    last_reports = None
    for attempt in range(retries + 1):
        comp_seed = seed if attempt == 0 else derive_seed(seed, "leakage-retry", ratio, attempt)
        comp_cfg = CompositionConfig(
            ratio_percent=ratio,
            word_budget=cfg["word_budget"],
            seed=derive_seed(comp_seed, "compose", ratio),
            condition="consecutive",
        )
        dataset = compose_dataset(filler_pool, synth_pool, comp_cfg)
        reports = {"consecutive": leakage_check(dataset, detect_cfg)}
        twin = None
        if want_shuffled:
            twin = shuffle_control(dataset, derive_seed(comp_seed, "shuffle", ratio))
            reports["shuffled"] = leakage_check(twin, detect_cfg)
        last_reports = reports
        leaked = sum(r.natural_vs_found for r in reports.values())
        if not cfg["strict_leakage"] or leaked == 0:
            out = {"ratio": ratio, "attempts": attempt + 1, "datasets": {}, "leakage": {}}
            if "consecutive" in cfg["conditions"]:
                out["datasets"]["consecutive"] = dataset
            if want_shuffled:
                out["datasets"]["shuffled"] = twin
            out["leakage"] = {k: v.to_dict() for k, v in reports.items()}
            return out
        log.warning("ratio %d attempt %d leaked %d natural sets; re-seeding", ratio, attempt, leaked)
    from .composer import LeakageError, LeakageReport

    raise LeakageError(
        f"ratio {ratio}: natural variation sets persist after {retries} re-seeds",
        last_reports["consecutive"] if last_reports else LeakageReport(0, ()),
    )


def run_pipeline(config: dict, out_dir: str | Path | None = None) -> dict:
    """Run the full grid and return the run manifest (also written to disk)."""
    cfg = validate_config(config)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    out = Path(cfg["out_dir"])
    created: list[Path] = []
    timings: dict[str, float] = {}
    artifacts: list[dict] = []

    def track(path: Path) -> Path:
        created.append(path)
        return path

    try:
        out.mkdir(parents=True, exist_ok=True)
        for sub in ("corpus", "synth", "datasets", "schedules"):
            (out / sub).mkdir(exist_ok=True)

        t0 = time.monotonic()
        transcripts, raw_utts = load_corpus(cfg)
        if not raw_utts:
            raise PipelineError("corpus is empty after cleaning")
        filtered_transcripts = [
            Transcript(file_id=t.file_id, utterances=filter_short(t.utterances, cfg["min_words"]))
            for t in transcripts
        ]
        filler_pool = select_budget(filtered_transcripts, cfg["word_budget"] * 2)
        detect_cfg = detection_config(cfg["detect"])
        raw_stats = corpus_stats(raw_utts, detect_cfg)
        filler_digest = write_utterances(track(out / "corpus" / "filler.jsonl"), filler_pool)
        artifacts.append({"path": "corpus/filler.jsonl", "digest": filler_digest, "kind": "corpus"})
        timings["ingest"] = time.monotonic() - t0

        t0 = time.monotonic()
        max_ratio = max(cfg["ratios"], default=0)
        target_words = int(cfg["word_budget"] * max_ratio / 100 * 1.1)
        syn_cfg = synth_config(cfg["synth"], seed=derive_seed(cfg["seed"], "synth"))
        synth_pool = (
            synthesize_pool(filler_pool, syn_cfg, target_words=target_words)
            if target_words > 0
            else []
        )
        synth_digest = write_sets(track(out / "synth" / "sets.jsonl"), synth_pool)
        artifacts.append({"path": "synth/sets.jsonl", "digest": synth_digest, "kind": "synth"})
        timings["synth"] = time.monotonic() - t0

        t0 = time.monotonic()
        jobs = cfg["jobs"] or min(len(cfg["ratios"]), os.cpu_count() or 1)
        if jobs > 1 and len(cfg["ratios"]) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_compose_pair, filler_pool, synth_pool, ratio, cfg, detect_cfg)
                    for ratio in cfg["ratios"]
                ]
                results = [f.result() for f in futures]
        else:
            results = [
                _compose_pair(filler_pool, synth_pool, ratio, cfg, detect_cfg)
                for ratio in cfg["ratios"]
            ]
        results.sort(key=lambda r: r["ratio"])
        leakage_summary = {}
        datasets: list[tuple[str, Dataset]] = []
        for res in results:
            ratio = res["ratio"]
            leakage_summary[str(ratio)] = {"attempts": res["attempts"], **res["leakage"]}
            for cond, dataset in res["datasets"].items():
                name = f"ratio{ratio:03d}_{cond}"
                digest = write_dataset(dataset, track(out / "datasets" / f"{name}.jsonl"))
                track(out / "datasets" / f"{name}.manifest.json")
                artifacts.append(
                    {"path": f"datasets/{name}.jsonl", "digest": digest, "kind": "dataset",
                     "ratio": ratio, "condition": cond}
                )
                datasets.append((name, dataset))
        timings["compose"] = time.monotonic() - t0

        t0 = time.monotonic()
        for name, dataset in datasets:
            for method in cfg["methods"]:
                maker = schedule_sequential_concat if method == "sequential_concat" else schedule_adjacent_batch
                schedule = maker(dataset, cfg["batch_size"])
                report = verify_schedule(schedule, dataset)
                if not report.ok:
                    raise PipelineError(
                        f"schedule verification failed for {name} {method}: {report.first_violation}"
                    )
                sched_path = track(out / "schedules" / f"{name}_{method}.schedule.jsonl")
                data = write_schedule(schedule, sched_path)
                artifacts.append(
                    {"path": f"schedules/{name}_{method}.schedule.jsonl",
                     "digest": sha256_hex(data), "kind": "schedule", "method": method}
                )
        timings["schedule"] = time.monotonic() - t0

        manifest = {
            "tool": "varsets",
            "version": __version__,
            "cleaning_rules": CLEANING_RULES_VERSION,
            "prng": PRNG_NAME,
            "seed_scheme": SEED_SCHEME,
            "config": {k: v for k, v in cfg.items() if k != "out_dir"},
            "stage_seeds": {
                "synth": derive_seed(cfg["seed"], "synth"),
                "compose": {str(r): derive_seed(cfg["seed"], "compose", r) for r in cfg["ratios"]},
            },
            "corpus_stats": raw_stats.to_dict(),
            "leakage": leakage_summary,
            "artifacts": sorted(artifacts, key=lambda a: a["path"]),
            "wall_clock_seconds": {k: round(v, 3) for k, v in timings.items()},
        }
        manifest_path = out / "run_manifest.json"
        manifest_path.write_text(
            json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return manifest
    except Exception:
        for path in created:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        raise


def stats_report(path: str | Path, json_out: str | Path | None = None) -> dict:
    """Human-readable plus machine-readable stats for a corpus or dataset file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if not records:
        raise PipelineError(f"{path} holds no records")
    if "kind" in records[0]:
        sequences = [DatasetSequence.from_record(r) for r in records]
        cfg = CompositionConfig(
            ratio_percent=0, word_budget=max(1, sum(s.word_count for s in sequences)),
            seed=0, condition="consecutive", allow_any_ratio=True,
        )
        stats = corpus_stats(Dataset(sequences=sequences, config=cfg))
        kind = "dataset"
    else:
        utts = [Utterance.from_record(r) for r in records]
        stats = corpus_stats(utts)
        kind = "corpus"
    report = {"path": str(path), "kind": kind, **stats.to_dict()}
    if json_out is not None:
        Path(json_out).write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return report
