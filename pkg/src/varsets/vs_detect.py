"""Detect naturally occurring variation sets via lexical-anchor overlap.

Successive utterances belong to one set when they repeat or rephrase the
same content; the operational signal is shared content words ("anchors").
Two utterances link when they share at least `anchor_min_shared` anchors or
their content-word Jaccard reaches `jaccard_min`; chaining tolerates up to
`max_gap` intervening non-linking utterances, which are not members.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .chat_ingest import Utterance
from .util import read_jsonl, write_jsonl

# Function words excluded from anchor comparison.  Deliberately small:
# pronouns and question words stay content-bearing (they anchor rephrasings
# like "what do you want" ~ "what do you need"), while articles, possessive
# determiners, auxiliaries, conjunctions and prepositions do not.
DEFAULT_STOPWORDS = frozenset(
    """
    a an the this these those some any each every both all such
    my your his its our their
    am is are was were be been being
    do does did doing done
    have has had having
    will would shall should may might must can could ought
    and or but nor so yet if because as while until than whether
    of at by for with from to in on onto into through during
    before after above below over under between against about
    up down out off
    not
    here's there's that's
    """.split()
)

_STRIP_CHARS = ".?!,;:\"'“”‘’"


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionConfig:
    anchor_min_shared: int = 2
    jaccard_min: float = 0.33
    max_gap: int = 1
    min_set_size: int = 2
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    match_speaker: bool = True

    def __post_init__(self):
        if not 0.0 <= self.jaccard_min <= 1.0:
            raise ValueError("jaccard_min must be in [0, 1]")
        if self.min_set_size < 2:
            raise ValueError("min_set_size must be >= 2")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if self.anchor_min_shared < 1:
            raise ValueError("anchor_min_shared must be >= 1")


@dataclass(frozen=True)
class OverlapScore:
    shared: frozenset[str]
    jaccard: float


@dataclass
class VariationSet:
    """An ordered group of utterances sharing intent.

    For natural sets, `members` are indices into the detected corpus and
    `texts` is None.  For synthetic sets, `members` are positions within the
    set itself, `texts` carries the surface forms, and `edit_ops[i]` is the
    replayable edit log that produced member i from member 0.
    """

    members: list[int]
    origin: str  # "natural" | "synthetic"
    anchors: frozenset[str]
    speaker: str | None = None
    texts: list[str] | None = None
    edit_ops: list = field(default_factory=list)
    shortfall: bool = False


def content_words(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS) -> frozenset[str]:
    """Case-folded, punctuation-stripped non-stopword tokens."""
    out = set()
    for tok in text.split():
        tok = tok.casefold().strip(_STRIP_CHARS)
        if tok and tok not in stopwords:
            out.add(tok)
    return frozenset(out)


def anchor_overlap(
    a: Utterance | str, b: Utterance | str, stopwords: frozenset[str] = DEFAULT_STOPWORDS
) -> OverlapScore:
    """Content-word overlap between two cleaned utterances.

    Jaccard is computed over content-word sets and defined as 0 when both
    sides are all-stopword.
    """
    ca = content_words(a if isinstance(a, str) else a.text, stopwords)
    cb = content_words(b if isinstance(b, str) else b.text, stopwords)
    union = ca | cb
    shared = ca & cb
    jaccard = len(shared) / len(union) if union else 0.0
    return OverlapScore(shared=frozenset(shared), jaccard=jaccard)


def _links(ca: frozenset[str], cb: frozenset[str], cfg: DetectionConfig) -> bool:
    shared = ca & cb
    if len(shared) >= cfg.anchor_min_shared:
        return True
    union = ca | cb
    jaccard = len(shared) / len(union) if union else 0.0
    return jaccard >= cfg.jaccard_min


def links(a: Utterance | str, b: Utterance | str, cfg: DetectionConfig = DetectionConfig()) -> bool:
    """The chaining predicate: enough shared anchors or enough Jaccard."""
    ca = content_words(a if isinstance(a, str) else a.text, cfg.stopwords)
    cb = content_words(b if isinstance(b, str) else b.text, cfg.stopwords)
    return _links(ca, cb, cfg)


class _OpenSet:
    __slots__ = ("members", "content", "speaker", "gap")

    def __init__(self, index: int, cw: frozenset[str], speaker: str):
        self.members = [index]
        self.content = [cw]
        self.speaker = speaker
        self.gap = 0


def detect_variation_sets(
    utterances: list[Utterance], cfg: DetectionConfig = DetectionConfig()
) -> list[VariationSet]:
    """Greedy left-to-right chaining of linked utterances into sets.

    An utterance extends the earliest open set any of whose members it links
    to (same speaker, when match_speaker is set); otherwise it opens a
    candidate set of its own.  A set closes once more than max_gap
    consecutive utterances pass without joining it; closed sets smaller than
    min_set_size are discarded.  Each utterance belongs to at most one set.
    """
    contents = [content_words(u.text, cfg.stopwords) for u in utterances]
    open_sets: list[_OpenSet] = []
    closed: list[VariationSet] = []

    def close(s: _OpenSet):
        if len(s.members) >= cfg.min_set_size:
            closed.append(
                VariationSet(
                    members=s.members,
                    origin="natural",
                    anchors=_set_anchors(s.content),
                    speaker=s.speaker if cfg.match_speaker else None,
                )
            )

    for i, utt in enumerate(utterances):
        cw = contents[i]
        joined = None
        for s in open_sets:
            if cfg.match_speaker and s.speaker != utt.speaker:
                continue
            if any(_links(cw, mc, cfg) for mc in s.content):
                s.members.append(i)
                s.content.append(cw)
                s.gap = 0
                joined = s
                break
        if joined is None:
            joined = _OpenSet(i, cw, utt.speaker)
            open_sets.append(joined)
        survivors = []
        for s in open_sets:
            if s is joined:
                survivors.append(s)
                continue
            s.gap += 1
            if s.gap > cfg.max_gap:
                close(s)
            else:
                survivors.append(s)
        open_sets = survivors

    for s in open_sets:
        close(s)
    closed.sort(key=lambda vs: vs.members[0])
    return closed


def _set_anchors(contents: list[frozenset[str]]) -> frozenset[str]:
    """Content words shared by at least two members."""
    counts: dict[str, int] = {}
    for cw in contents:
        for w in cw:
            counts[w] = counts.get(w, 0) + 1
    return frozenset(w for w, n in counts.items() if n >= 2)


def vs_coverage(utterances: list[Utterance], cfg: DetectionConfig = DetectionConfig()) -> float:
    """Fraction of corpus words inside detected variation-set members."""
    if not utterances:
        raise DetectionError("coverage is undefined for an empty corpus")
    total = sum(len(u.words) for u in utterances)
    if total == 0:
        raise DetectionError("coverage is undefined for a wordless corpus")
    sets = detect_variation_sets(utterances, cfg)
    covered = sum(len(utterances[i].words) for vs in sets for i in vs.members)
    return covered / total


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One word per line; blank lines and #-comments ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.casefold())
    return frozenset(words)


def set_to_record(vs: VariationSet, set_id: int) -> dict:
    rec = {
        "set_id": set_id,
        "origin": vs.origin,
        "members": list(vs.members),
        "anchors": sorted(vs.anchors),
    }
    if vs.speaker is not None:
        rec["speaker"] = vs.speaker
    if vs.texts is not None:
        rec["texts"] = list(vs.texts)
    if vs.edit_ops:
        rec["edit_ops"] = [[op.to_record() for op in ops] for ops in vs.edit_ops]
    if vs.shortfall:
        rec["shortfall"] = True
    return rec


def record_to_set(rec: dict) -> VariationSet:
    edit_ops = []
    if "edit_ops" in rec:
        from .vs_synth import EditOp  # deferred: vs_synth imports this module

        edit_ops = [[EditOp.from_record(op) for op in ops] for ops in rec["edit_ops"]]
    return VariationSet(
        members=list(rec["members"]),
        origin=rec["origin"],
        anchors=frozenset(rec["anchors"]),
        speaker=rec.get("speaker"),
        texts=list(rec["texts"]) if "texts" in rec else None,
        edit_ops=edit_ops,
        shortfall=bool(rec.get("shortfall", False)),
    )


def write_sets(path: str | Path, sets: Iterable[VariationSet]) -> str:
    return write_jsonl(path, (set_to_record(vs, i) for i, vs in enumerate(sets)))


def read_sets(path: str | Path) -> list[VariationSet]:
    return [record_to_set(rec) for rec in read_jsonl(path)]
