"""Compose training datasets with an exact synthetic variation-set share.

Selection, shuffling, and interleaving are all driven by seeds derived from
the composition seed, so a (pools, config) pair always yields byte-identical
dataset files.  Ratio is measured in words: the word budget is stated in
words, and word-level ratios keep token exposure comparable across
conditions.  Selected sets are kept whole; the +-0.5% budget tolerance
absorbs the granularity.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .chat_ingest import Utterance
from .util import PRNG_NAME, SEED_SCHEME, derive_seed, jsonl_bytes, sha256_hex
from .vs_detect import DetectionConfig, VariationSet, detect_variation_sets, vs_coverage

log = logging.getLogger(__name__)

ALLOWED_RATIOS = (0, 20, 40, 60, 80, 100)
BUDGET_TOLERANCE = 0.005
DATASET_FORMAT = "varsets-dataset"
DATASET_VERSION = 1

KIND_VS = "vs_member"
KIND_FILLER = "filler"


class CompositionError(ValueError):
    pass


class LeakageError(RuntimeError):
    def __init__(self, message: str, report: "LeakageReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class CompositionConfig:
    ratio_percent: int
    word_budget: int
    seed: int
    condition: str = "consecutive"
    allow_any_ratio: bool = False

    def __post_init__(self):
        if self.ratio_percent not in ALLOWED_RATIOS and not self.allow_any_ratio:
            raise CompositionError(
                f"ratio_percent {self.ratio_percent} not in {ALLOWED_RATIOS}; "
                "pass allow_any_ratio=True to override"
            )
        if not 0 <= self.ratio_percent <= 100:
            raise CompositionError("ratio_percent must be in [0, 100]")
        if self.word_budget <= 0:
            raise CompositionError("word_budget must be positive")
        if self.condition not in ("consecutive", "shuffled"):
            raise CompositionError(f"unknown condition: {self.condition!r}")


@dataclass(frozen=True)
class DatasetSequence:
    text: str
    kind: str  # KIND_VS | KIND_FILLER
    vs_id: int | None = None
    member_index: int | None = None

    @property
    def word_count(self) -> int:
        return len(self.text.split())

    def to_record(self) -> dict:
        return {
            "text": self.text,
            "kind": self.kind,
            "vs_id": self.vs_id,
            "member_index": self.member_index,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DatasetSequence":
        return cls(
            text=rec["text"],
            kind=rec["kind"],
            vs_id=rec.get("vs_id"),
            member_index=rec.get("member_index"),
        )


@dataclass
class Dataset:
    sequences: list[DatasetSequence]
    config: CompositionConfig
    manifest_hash: str = ""

    def records(self) -> list[dict]:
        return [s.to_record() for s in self.sequences]

    def word_counts(self) -> dict[str, int]:
        vs = sum(s.word_count for s in self.sequences if s.kind == KIND_VS)
        filler = sum(s.word_count for s in self.sequences if s.kind == KIND_FILLER)
        return {"total": vs + filler, "vs_member": vs, "filler": filler}


@dataclass(frozen=True)
class CorpusStats:
    total_words: int
    type_count: int
    fragment_ratio: float
    question_ratio: float
    vs_word_coverage: float

    def to_dict(self) -> dict:
        return {
            "total_words": self.total_words,
            "type_count": self.type_count,
            "fragment_ratio": self.fragment_ratio,
            "question_ratio": self.question_ratio,
            "vs_word_coverage": self.vs_word_coverage,
        }


@dataclass(frozen=True)
class LeakageReport:
    natural_vs_found: int
    offending: tuple[tuple[int, ...], ...]  # dataset sequence indices per detected set

    def to_dict(self) -> dict:
        return {
            "natural_vs_found": self.natural_vs_found,
            "offending": [list(ix) for ix in self.offending],
        }


def _finalize(dataset: Dataset) -> Dataset:
    dataset.manifest_hash = sha256_hex(jsonl_bytes(dataset.records()))
    return dataset


def compose_dataset(
    filler_pool: list[Utterance],
    synth_pool: list[VariationSet],
    cfg: CompositionConfig,
) -> Dataset:
    """Build a consecutive-condition dataset at the configured ratio.

    Synthetic sets are drawn in seeded-shuffled order until their word count
    reaches ratio*budget/100 (closest not over, then one more set if that is
    closer); the remainder is seeded-shuffled filler; whole sets are planted
    contiguously at seeded positions among the filler.
    """
    budget = cfg.word_budget
    tol = BUDGET_TOLERANCE * budget
    target_vs = budget * cfg.ratio_percent / 100.0

    if cfg.ratio_percent == 100 and not synth_pool:
        raise CompositionError("ratio 100 requires a non-empty synthetic pool")

    set_order = list(range(len(synth_pool)))
    random.Random(derive_seed(cfg.seed, "sets")).shuffle(set_order)
    set_words = [sum(len(t.split()) for t in synth_pool[i].texts) for i in range(len(synth_pool))]

    chosen: list[int] = []
    acc = 0
    skipped: list[int] = []
    for idx in set_order:
        if acc + set_words[idx] <= target_vs:
            chosen.append(idx)
            acc += set_words[idx]
        else:
            skipped.append(idx)
    if skipped and acc < target_vs:
        extra = skipped[0]
        if abs(acc + set_words[extra] - target_vs) < abs(target_vs - acc):
            chosen.append(extra)
            acc += set_words[extra]
    if abs(acc - target_vs) > tol:
        raise CompositionError(
            f"synthetic pool cannot meet ratio {cfg.ratio_percent}%: "
            f"need {target_vs:.0f} variation-set words, placed {acc} "
            f"(deficit {target_vs - acc:.0f}, pool total {sum(set_words)})"
        )

    remaining = budget - acc
    filler_order = list(range(len(filler_pool)))
    random.Random(derive_seed(cfg.seed, "filler")).shuffle(filler_order)
    filler_chosen: list[int] = []
    filler_acc = 0
    filler_skipped: list[int] = []
    for idx in filler_order:
        n = len(filler_pool[idx].words)
        if filler_acc + n <= remaining:
            filler_chosen.append(idx)
            filler_acc += n
        else:
            filler_skipped.append(idx)
    if filler_skipped and filler_acc < remaining:
        extra = filler_skipped[0]
        n = len(filler_pool[extra].words)
        if abs(filler_acc + n - remaining) < abs(remaining - filler_acc):
            filler_chosen.append(extra)
            filler_acc += n
    total = acc + filler_acc
    if abs(total - budget) > tol:
        raise CompositionError(
            f"filler pool cannot meet the word budget: need {remaining:.0f} filler words, "
            f"placed {filler_acc} (deficit {remaining - filler_acc:.0f}, "
            f"pool total {sum(len(u.words) for u in filler_pool)})"
        )

    rng_pos = random.Random(derive_seed(cfg.seed, "positions"))
    blocks_at: dict[int, list[int]] = {}
    for j, idx in enumerate(chosen):
        pos = rng_pos.randint(0, len(filler_chosen))
        blocks_at.setdefault(pos, []).append(idx)

    sequences: list[DatasetSequence] = []
    next_vs_id = 0
    for i in range(len(filler_chosen) + 1):
        for set_idx in blocks_at.get(i, ()):
            vs = synth_pool[set_idx]
            for m, text in enumerate(vs.texts):
                sequences.append(
                    DatasetSequence(text=text, kind=KIND_VS, vs_id=next_vs_id, member_index=m)
                )
            next_vs_id += 1
        if i < len(filler_chosen):
            sequences.append(
                DatasetSequence(text=filler_pool[filler_chosen[i]].text, kind=KIND_FILLER)
            )

    dataset = _finalize(Dataset(sequences=sequences, config=cfg))
    counts = dataset.word_counts()
    assert counts["total"] == total
    log.info(
        "composed ratio=%d%% condition=%s: %d sequences, %d words (%d vs, %d filler)",
        cfg.ratio_percent, cfg.condition, len(sequences), total, acc, filler_acc,
    )
    return dataset


def shuffle_control(dataset: Dataset, seed: int) -> Dataset:
    """The shuffled twin: identical sequence multiset, order re-randomized at
    sequence granularity, variation-set contiguity destroyed."""
    if dataset.config.condition != "consecutive":
        raise CompositionError("shuffle_control expects a consecutive-condition dataset")
    seqs = list(dataset.sequences)
    random.Random(derive_seed(seed, "control")).shuffle(seqs)
    cfg = replace(dataset.config, condition="shuffled")
    return _finalize(Dataset(sequences=seqs, config=cfg))


def leakage_check(dataset: Dataset, cfg: DetectionConfig = DetectionConfig()) -> LeakageReport:
    """Detect natural variation sets among the filler subsequence.

    The filler sequences are scanned in dataset order (interleaved set blocks
    do not reset chaining, which is the stricter reading).
    """
    filler = [(i, s) for i, s in enumerate(dataset.sequences) if s.kind == KIND_FILLER]
    utterances = [
        Utterance(text=s.text, speaker="", source_file="<dataset>", source_line=i)
        for i, s in filler
    ]
    found = detect_variation_sets(utterances, cfg)
    offending = tuple(tuple(filler[m][0] for m in vs.members) for vs in found)
    return LeakageReport(natural_vs_found=len(found), offending=offending)


def compose_dataset_strict(
    filler_pool: list[Utterance],
    synth_pool: list[VariationSet],
    cfg: CompositionConfig,
    detect_cfg: DetectionConfig = DetectionConfig(),
    max_retries: int = 5,
) -> tuple[Dataset, LeakageReport]:
    """Compose and re-seed until the filler carries no natural variation sets."""
    report = None
    for attempt in range(max_retries + 1):
        attempt_cfg = cfg if attempt == 0 else replace(
            cfg, seed=derive_seed(cfg.seed, "leakage-retry", attempt)
        )
        dataset = compose_dataset(filler_pool, synth_pool, attempt_cfg)
        report = leakage_check(dataset, detect_cfg)
        if report.natural_vs_found == 0:
            return dataset, report
        log.warning(
            "leakage attempt %d: %d natural sets in filler", attempt, report.natural_vs_found
        )
    raise LeakageError(
        f"natural variation sets persist in filler after {max_retries} re-seeds", report
    )


def _token_types(texts: Iterable[str]) -> int:
    types = set()
    for text in texts:
        for tok in text.split():
            tok = tok.casefold().strip(".?!,;:\"'")
            if tok:
                types.add(tok)
    return len(types)


def corpus_stats(
    source: Dataset | list[Utterance],
    detect_cfg: DetectionConfig = DetectionConfig(),
) -> CorpusStats:
    """Word/type counts, fragment and question ratios, and VS word coverage.

    For a Dataset the coverage is the vs_member word share; for a raw
    utterance list it is measured by the detector.
    """
    if isinstance(source, Dataset):
        texts = [s.text for s in source.sequences]
        if not texts:
            raise CompositionError("stats are undefined for an empty dataset")
        counts = source.word_counts()
        coverage = counts["vs_member"] / counts["total"] if counts["total"] else 0.0
        total_words = counts["total"]
    else:
        if not source:
            raise CompositionError("stats are undefined for an empty corpus")
        texts = [u.text for u in source]
        total_words = sum(len(t.split()) for t in texts)
        coverage = vs_coverage(source, detect_cfg) if total_words else 0.0
    fragments = sum(1 for t in texts if len(t.split()) < 3)
    questions = sum(1 for t in texts if t.endswith("?"))
    return CorpusStats(
        total_words=total_words,
        type_count=_token_types(texts),
        fragment_ratio=fragments / len(texts),
        question_ratio=questions / len(texts),
        vs_word_coverage=coverage,
    )


def write_dataset(dataset: Dataset, path: str | Path, manifest_path: str | Path | None = None) -> str:
    """Write the dataset JSONL plus its sidecar manifest; returns the digest."""
    path = Path(path)
    data = jsonl_bytes(dataset.records())
    path.write_bytes(data)
    digest = sha256_hex(data)
    assert digest == dataset.manifest_hash
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "config": {
            "ratio_percent": dataset.config.ratio_percent,
            "word_budget": dataset.config.word_budget,
            "seed": dataset.config.seed,
            "condition": dataset.config.condition,
        },
        "prng": PRNG_NAME,
        "seed_scheme": SEED_SCHEME,
        "sequence_count": len(dataset.sequences),
        "word_counts": dataset.word_counts(),
        "stats": corpus_stats(dataset).to_dict(),
        "content_digest": digest,
    }
    if manifest_path is None:
        manifest_path = path.with_suffix(".manifest.json")
    Path(manifest_path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return digest


def read_dataset(path: str | Path, manifest_path: str | Path | None = None) -> Dataset:
    """Load a dataset file, verifying its digest against the sidecar manifest."""
    path = Path(path)
    if manifest_path is None:
        manifest_path = path.with_suffix(".manifest.json")
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    data = path.read_bytes()
    digest = sha256_hex(data)
    if digest != manifest["content_digest"]:
        raise CompositionError(f"dataset digest mismatch for {path}")
    sequences = [DatasetSequence.from_record(json.loads(line)) for line in data.decode("utf-8").splitlines() if line]
    mc = manifest["config"]
    cfg = CompositionConfig(
        ratio_percent=mc["ratio_percent"],
        word_budget=mc["word_budget"],
        seed=mc["seed"],
        condition=mc["condition"],
        allow_any_ratio=True,
    )
    dataset = Dataset(sequences=sequences, config=cfg, manifest_hash=digest)
    return dataset
