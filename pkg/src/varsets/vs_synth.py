"""Rule-based variation-set synthesis from a seed utterance.

Variants are produced by 1..max_ops seeded edit operations (word or phrase
substitution, phrase addition or deletion, chunk reordering, and a
declarative/interrogative transform driven by an auxiliary table).  Every
edit is recorded and replays exactly via apply_edit, so each synthetic set
carries full provenance.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .chat_ingest import Utterance
from .util import derive_seed
from .vs_detect import (
    DEFAULT_STOPWORDS,
    DetectionConfig,
    VariationSet,
    anchor_overlap,
    content_words,
    links,
)

EDIT_KINDS = ("substitute", "add_phrase", "delete_phrase", "reorder", "question_transform")

_TERMINAL = ".?!"
_BOUNDARY_WORDS = frozenset({"and", "or", "but", "then", "so"})

# Retry budget per requested variant before reporting a shortfall.
_ATTEMPTS_PER_VARIANT = 24


class SynthError(ValueError):
    pass


class EditError(ValueError):
    """Raised when an edit operation cannot be applied to a word list."""


@dataclass(frozen=True)
class EditOp:
    """One edit step.  span is an inclusive word-index range in the list the
    op is applied to; add_phrase uses span start as the insertion point (and
    may equal the list length to append)."""

    kind: str
    span: tuple[int, int]
    replacement: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise EditError(f"unknown edit kind: {self.kind}")
        if self.kind in ("substitute", "add_phrase") and not self.replacement:
            raise EditError(f"{self.kind} requires a non-empty replacement")
        if self.kind in ("delete_phrase", "reorder") and self.replacement is not None:
            raise EditError(f"{self.kind} carries no replacement")

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "span": list(self.span),
            "replacement": list(self.replacement) if self.replacement is not None else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EditOp":
        repl = rec.get("replacement")
        return cls(
            kind=rec["kind"],
            span=(int(rec["span"][0]), int(rec["span"][1])),
            replacement=tuple(repl) if repl is not None else None,
        )


@dataclass(frozen=True)
class Lexicon:
    """Same-register word alternatives, addable phrases, and the auxiliary
    table used for the declarative/interrogative transform.

    In the auxiliary table, a key mapping to itself is a frontable auxiliary;
    a subject pronoun maps to its do-support form.
    """

    substitutions: dict[str, tuple[str, ...]]
    addable_phrases: dict[str, tuple[str, ...]]  # slot ("start"/"end") -> phrases
    auxiliary_table: dict[str, str]

    def __post_init__(self):
        by_first: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for key, alts in self.substitutions.items():
            if key != key.lower():
                raise SynthError(f"lexicon entries must be lowercase: {key!r}")
            if key in alts:
                raise SynthError(f"lexicon word maps to itself: {key!r}")
            key_words = tuple(key.split())
            by_first.setdefault(key_words[0], []).append((key_words, key))
        for entries in by_first.values():
            entries.sort()
        object.__setattr__(self, "_subs_by_first", by_first)

    @property
    def frontable(self) -> frozenset[str]:
        return frozenset(k for k, v in self.auxiliary_table.items() if k == v)

    @property
    def do_subjects(self) -> frozenset[str]:
        return frozenset(k for k, v in self.auxiliary_table.items() if v == "do" and k != "do")

    @property
    def subjects(self) -> frozenset[str]:
        return self.do_subjects | frozenset({"he", "she", "it"})

    def is_empty(self) -> bool:
        return not self.substitutions and not any(self.addable_phrases.values())


@dataclass(frozen=True)
class SynthConfig:
    n_variants: int = 5
    question_ratio_target: float = 0.48
    max_ops_per_variant: int = 2
    lexicon: Lexicon | None = None  # None -> packaged starter lexicon
    seed: int = 0

    def __post_init__(self):
        if self.n_variants < 1:
            raise SynthError("n_variants must be >= 1")
        if not 0.0 <= self.question_ratio_target <= 1.0:
            raise SynthError("question_ratio_target must be in [0, 1]")
        if self.max_ops_per_variant < 1:
            raise SynthError("max_ops_per_variant must be >= 1")


def parse_lexicon(text: str) -> Lexicon:
    subs: dict[str, tuple[str, ...]] = {}
    phrases: dict[str, tuple[str, ...]] = {"start": (), "end": ()}
    aux: dict[str, str] = {}
    section = "substitutions"
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if "\t" not in line:
            raise SynthError(f"malformed lexicon line (expected TAB): {line!r}")
        key, _, value = line.partition("\t")
        key = key.strip()
        if section == "substitutions":
            subs[key] = tuple(alt.strip() for alt in value.split("|") if alt.strip())
        elif section == "phrases":
            if key not in ("start", "end"):
                raise SynthError(f"unknown phrase slot: {key!r}")
            phrases[key] = phrases[key] + tuple(p.strip() for p in value.split("|") if p.strip())
        elif section == "auxiliary":
            aux[key] = value.strip()
        else:
            raise SynthError(f"unknown lexicon section: {section!r}")
    return Lexicon(substitutions=subs, addable_phrases=phrases, auxiliary_table=aux)


def load_lexicon(path: str | Path) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


def default_lexicon() -> Lexicon:
    text = resources.files("varsets").joinpath("data/lexicon.txt").read_text(encoding="utf-8")
    return parse_lexicon(text)


def _split_terminal(tok: str) -> tuple[str, str]:
    stem = tok.rstrip(_TERMINAL)
    return stem, tok[len(stem):]


def _strip(tok: str) -> str:
    return tok.casefold().strip(".?!,;:\"'")


def _is_boundary(tok: str) -> bool:
    return _strip(tok) in _BOUNDARY_WORDS or tok.rstrip(_TERMINAL).endswith(",")


def _match_case(word: str, model: str) -> str:
    if model[:1].isupper():
        return word[:1].upper() + word[1:]
    return word


def _force_terminal(words: list[str], mark: str) -> None:
    if not words:
        return
    stem, _ = _split_terminal(words[-1])
    words[-1] = stem + mark


def apply_edit(words: Sequence[str], op: EditOp) -> list[str]:
    """Apply one edit operation to a word list, returning a new list.

    Deterministic punctuation handling: edits that insert after, delete, or
    move the final word migrate its terminal punctuation so the sentence stays
    terminated; question_transform rewrites its span (when a replacement is
    recorded) and forces a trailing "?".
    """
    n = len(words)
    s, e = op.span
    new = list(words)

    if op.kind == "add_phrase":
        if not 0 <= s <= n:
            raise EditError(f"insertion point {s} out of bounds for {n} words")
        phrase = list(op.replacement)
        if s == n and n > 0:
            stem, punct = _split_terminal(new[-1])
            if punct:
                new[-1] = stem
                phrase[-1] = phrase[-1] + punct
        new[s:s] = phrase
        return new

    if not (0 <= s <= e < n):
        raise EditError(f"span {op.span} out of bounds for {n} words")

    if op.kind == "substitute":
        new[s : e + 1] = list(op.replacement)
        return new

    if op.kind == "delete_phrase":
        _, punct = _split_terminal(new[e])
        deleted_final = e == n - 1
        del new[s : e + 1]
        if deleted_final and punct and new:
            _force_terminal(new, punct)
        return new

    if op.kind == "reorder":
        return _apply_reorder(new, s, e)

    # question_transform
    if op.replacement is not None:
        new[s : e + 1] = list(op.replacement)
    _force_terminal(new, "?")
    return new


def _apply_reorder(words: list[str], s: int, e: int) -> list[str]:
    """Swap words[s..e] with the adjacent boundary-delimited chunk."""
    n = len(words)
    _, final_punct = _split_terminal(words[-1])
    j = e + 1
    while j < n and _is_boundary(words[j]):
        j += 1
    k = j
    while k < n and not _is_boundary(words[k]):
        k += 1
    if j < n and k > j:
        swapped = words[:s] + words[j:k] + words[e + 1 : j] + words[s : e + 1] + words[k:]
    else:
        # Span sits at the end: swap with the chunk before it.
        j = s - 1
        while j >= 0 and _is_boundary(words[j]):
            j -= 1
        k = j
        while k >= 0 and not _is_boundary(words[k]):
            k -= 1
        if j < 0:
            raise EditError("no adjacent chunk to reorder with")
        swapped = words[: k + 1] + words[s : e + 1] + words[j + 1 : s] + words[k + 1 : j + 1] + words[e + 1 :]
    if final_punct:
        # Re-terminate: strip the migrated punctuation and glue it to the new
        # final word.
        for i, tok in enumerate(swapped):
            stem, punct = _split_terminal(tok)
            if punct and i != len(swapped) - 1:
                swapped[i] = stem
        _force_terminal(swapped, final_punct)
    return swapped


def make_question_op(words: Sequence[str], lexicon: Lexicon) -> EditOp:
    """Build the declarative-to-interrogative transform for a word list.

    Prefers auxiliary fronting ("you can put ..." -> "can you put ..."),
    falls back to do-support for do-subjects, and otherwise to a
    rising-intonation question (punctuation only).
    """
    w0 = _strip(words[0]) if words else ""
    w1 = _strip(words[1]) if len(words) > 1 else ""
    if w0 in lexicon.subjects and w1 in lexicon.frontable:
        fronted = _match_case(words[1], words[0])
        subject = words[0][:1].lower() + words[0][1:]
        return EditOp("question_transform", (0, 1), (fronted, subject))
    if w0 in lexicon.do_subjects:
        do_form = _match_case(lexicon.auxiliary_table[w0], words[0])
        subject = words[0][:1].lower() + words[0][1:]
        return EditOp("question_transform", (0, 0), (do_form, subject))
    last = len(words) - 1
    return EditOp("question_transform", (last, last), None)


def make_statement_op(words: Sequence[str], lexicon: Lexicon) -> EditOp:
    """Build the interrogative-to-declarative rewrite as a substitute op."""
    w0 = _strip(words[0]) if words else ""
    w1 = _strip(words[1]) if len(words) > 1 else ""
    n = len(words)
    if w0 in ("do", "does", "did") and w1 in lexicon.do_subjects:
        new = [_match_case(words[1], words[0])] + list(words[2:])
        _force_terminal(new, ".")
        return EditOp("substitute", (0, n - 1), tuple(new))
    if w0 in lexicon.frontable and w1 in lexicon.subjects:
        new = [_match_case(words[1], words[0]), words[0][:1].lower() + words[0][1:]] + list(words[2:])
        _force_terminal(new, ".")
        return EditOp("substitute", (0, n - 1), tuple(new))
    stem, _ = _split_terminal(words[-1])
    return EditOp("substitute", (n - 1, n - 1), (stem + ".",))


def _substitution_sites(words: Sequence[str], lexicon: Lexicon) -> list[tuple[int, int, str]]:
    """(start, end, key) spans whose stripped tokens match a lexicon key."""
    stripped = [_strip(w) for w in words]
    by_first = lexicon._subs_by_first  # built in __post_init__
    sites = []
    for i, tok in enumerate(stripped):
        for key_words, key in by_first.get(tok, ()):
            k = len(key_words)
            if tuple(stripped[i : i + k]) == key_words:
                sites.append((i, i + k - 1, key))
    sites.sort()
    return sites


def _sample_substitute(words: list[str], lexicon: Lexicon, rng: random.Random) -> EditOp | None:
    sites = _substitution_sites(words, lexicon)
    if not sites:
        return None
    s, e, key = sites[rng.randrange(len(sites))]
    alts = lexicon.substitutions[key]
    alt = alts[rng.randrange(len(alts))].split()
    _, punct = _split_terminal(words[e])
    repl = list(alt)
    repl[-1] = repl[-1] + punct
    if s == 0:
        repl[0] = _match_case(repl[0], words[0])
    return EditOp("substitute", (s, e), tuple(repl))


def _sample_add_phrase(words: list[str], lexicon: Lexicon, rng: random.Random) -> EditOp | None:
    slots = [slot for slot in ("start", "end") if lexicon.addable_phrases.get(slot)]
    if not slots:
        return None
    slot = slots[rng.randrange(len(slots))]
    phrases = lexicon.addable_phrases[slot]
    phrase = phrases[rng.randrange(len(phrases))].split()
    if slot == "start":
        phrase[0] = _match_case(phrase[0], words[0])
        return EditOp("add_phrase", (0, 0), tuple(phrase))
    return EditOp("add_phrase", (len(words), len(words)), tuple(phrase))


def _sample_delete(words: list[str], rng: random.Random, min_len: int) -> EditOp | None:
    n = len(words)
    width = rng.choice((1, 2))
    if n - width < max(3, min_len):
        width = 1
    if n - width < max(3, min_len):
        return None
    s = rng.randrange(0, n - width + 1)
    return EditOp("delete_phrase", (s, s + width - 1))


def _sample_reorder(words: list[str], rng: random.Random) -> EditOp | None:
    boundaries = [i for i, w in enumerate(words) if _is_boundary(w)]
    candidates = []
    for b in boundaries:
        prev = b - 1
        while prev >= 0 and not _is_boundary(words[prev]):
            prev -= 1
        if prev + 1 <= b - 1 and b + 1 < len(words) and not _is_boundary(words[b + 1]):
            candidates.append((prev + 1, b - 1))
    if not candidates:
        return None
    s, e = candidates[rng.randrange(len(candidates))]
    return EditOp("reorder", (s, e))


def validate_variant(source: Utterance, variant: Sequence[str], n_ops: int = 1) -> bool:
    """A variant is acceptable when it differs from its source, keeps at
    least one shared content anchor, stays within [max(3, len/2), 2*len]
    words, and was produced by at least one edit."""
    text = " ".join(variant)
    if text == source.text or n_ops < 1:
        return False
    src_len = len(source.words)
    if not (max(3.0, 0.5 * src_len) <= len(variant) <= 2 * src_len):
        return False
    return len(anchor_overlap(source.text, text).shared) >= 1


def synthesize_variants(source: Utterance, cfg: SynthConfig) -> VariationSet:
    """Generate a synthetic variation set: the source plus n_variants
    distinct rule-derived rephrasings.

    The question_transform direction is sampled with a per-set bias so that
    the question fraction over a pool of generated sets converges to
    cfg.question_ratio_target.  If the retry budget cannot produce enough
    distinct valid variants the set is returned short with shortfall=True;
    members are never duplicated.
    """
    lexicon = cfg.lexicon if cfg.lexicon is not None else default_lexicon()
    if lexicon.is_empty():
        raise SynthError("lexicon has no substitutions or phrases")
    src_words = source.words
    if len(src_words) < 3:
        raise SynthError(f"source must pass the short-utterance filter: {source.text!r}")

    rng = random.Random(cfg.seed)
    n = cfg.n_variants
    target = cfg.question_ratio_target
    src_is_q = source.is_question
    # Per-set flip probability chosen so E[question members / (n+1)] = target
    # whether the seed utterance is a question or not.
    if src_is_q:
        p_flip = min(1.0, max(0.0, 1.0 - (target * (n + 1) - 1.0) / n))
    else:
        p_flip = min(1.0, max(0.0, target * (n + 1) / n))

    detect_cfg = DetectionConfig(match_speaker=False)
    texts = [source.text]
    ops_log: list[list[EditOp]] = [[]]
    member_contents = [content_words(source.text)]
    attempts = _ATTEMPTS_PER_VARIANT * n
    while len(texts) - 1 < n and attempts > 0:
        attempts -= 1
        flip = rng.random() < p_flip
        n_extra = rng.randint(0, cfg.max_ops_per_variant - 1) if flip else rng.randint(1, cfg.max_ops_per_variant)
        words = list(src_words)
        ops: list[EditOp] = []
        for _ in range(n_extra):
            op = _sample_op(words, lexicon, rng, min_len=max(3, (len(src_words) + 1) // 2))
            if op is None:
                break
            words = apply_edit(words, op)
            ops.append(op)
        if flip:
            op = make_statement_op(words, lexicon) if src_is_q else make_question_op(words, lexicon)
            words = apply_edit(words, op)
            ops.append(op)
        text = " ".join(words)
        if text in texts:
            continue
        if not validate_variant(source, words, n_ops=len(ops)):
            continue
        # Structural guarantees: every member pair must share an anchor, and
        # the detector must be able to chain the variant back to the seed, so
        # the whole set is recoverable as one set.
        cw = content_words(text)
        if any(not (cw & existing) for existing in member_contents):
            continue
        if not links(source.text, text, detect_cfg):
            continue
        texts.append(text)
        ops_log.append(ops)
        member_contents.append(cw)
    counts: dict[str, int] = {}
    for cw in member_contents:
        for w in cw:
            counts[w] = counts.get(w, 0) + 1
    anchors = frozenset(w for w, c in counts.items() if c >= 2)
    return VariationSet(
        members=list(range(len(texts))),
        origin="synthetic",
        anchors=anchors,
        speaker=source.speaker,
        texts=texts,
        edit_ops=ops_log,
        shortfall=len(texts) - 1 < n,
    )


def _sample_op(
    words: list[str], lexicon: Lexicon, rng: random.Random, min_len: int
) -> EditOp | None:
    kinds = []
    if _substitution_sites(words, lexicon):
        kinds.extend(["substitute", "substitute"])  # favored: closest to rephrasing
    if any(lexicon.addable_phrases.get(s) for s in ("start", "end")):
        kinds.append("add_phrase")
    if len(words) > max(3, min_len):
        kinds.append("delete_phrase")
    if any(_is_boundary(w) for w in words):
        kinds.append("reorder")
    if not kinds:
        return None
    kind = kinds[rng.randrange(len(kinds))]
    if kind == "substitute":
        return _sample_substitute(words, lexicon, rng)
    if kind == "add_phrase":
        return _sample_add_phrase(words, lexicon, rng)
    if kind == "delete_phrase":
        return _sample_delete(words, rng, min_len)
    return _sample_reorder(words, rng)


def replay_edits(source_words: Sequence[str], ops: Iterable[EditOp]) -> list[str]:
    """Fold apply_edit over an edit log; the provenance contract is that this
    reproduces the variant text exactly."""
    words = list(source_words)
    for op in ops:
        words = apply_edit(words, op)
    return words


def synthesize_pool(
    sources: Sequence[Utterance],
    cfg: SynthConfig,
    target_words: int | None = None,
) -> list[VariationSet]:
    """Synthesize sets from a list of seed utterances.

    Per-source seeds are derived as hash(cfg.seed, index) so outputs do not
    depend on scheduling order.  With target_words set, sources are cycled
    until the pool reaches that many member words.
    """
    if not sources:
        raise SynthError("no seed utterances")
    pool: list[VariationSet] = []
    total = 0
    count = len(sources) if target_words is None else None
    i = 0
    while True:
        if count is not None and i >= count:
            break
        if count is None and total >= target_words:
            break
        if count is None and i >= 100 * len(sources):
            raise SynthError(f"cannot reach {target_words} words from {len(sources)} sources")
        source = sources[i % len(sources)]
        vs = synthesize_variants(source, replace(cfg, seed=derive_seed(cfg.seed, "synth", i)))
        pool.append(vs)
        total += sum(len(t.split()) for t in vs.texts)
        i += 1
    return pool
