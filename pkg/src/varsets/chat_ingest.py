"""CHAT transcript ingestion: parse, clean, filter, and budget caregiver speech.

Parses CHAT-style transcripts (@ headers, *TIER: main lines, % dependent
tiers), strips annotation codes with a fixed, versioned rule list, and
selects a word budget of child-directed utterances.  Word counting is
whitespace tokens of the cleaned text with terminal punctuation glued to the
preceding word, so "uh oh ." counts as two words.
"""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .util import read_jsonl, write_jsonl

log = logging.getLogger(__name__)

# Bump when the cleaning rule list changes; recorded in run manifests.
CLEANING_RULES_VERSION = "clean-v1"

# Child tier excluded by default: the corpus of interest is child-DIRECTED speech.
CHILD_TIERS = frozenset({"CHI"})

TERMINAL_PUNCT = (".", "?", "!")

_TIER_RE = re.compile(r"^\*([A-Za-z0-9]+):\s*(.*)$")
# <retraced material> [/], [//], [///]: drop the retraced part, keep the final form.
_RETRACE_ANGLE_RE = re.compile(r"<[^<>]*>\s*\[/+\]")
_RETRACE_WORD_RE = re.compile(r"(?:^|\s)\S+\s+\[/+\]")
# Any remaining bracketed code ([?], [: text], [=! laughs], [* err], [% com], [x 2], ...).
_BRACKET_RE = re.compile(r"\[[^\[\]]*\]")
# Remaining angle brackets after retrace resolution mark scoped material; keep the words.
_ANGLE_CHARS_RE = re.compile(r"[<>]")
_UNINTELLIGIBLE = frozenset({"xxx", "yyy", "www"})


@dataclass(frozen=True)
class Utterance:
    """One cleaned caregiver utterance with provenance."""

    text: str
    speaker: str
    source_file: str
    source_line: int

    @property
    def words(self) -> list[str]:
        return self.text.split()

    @property
    def is_question(self) -> bool:
        return self.text.endswith("?")

    def to_record(self) -> dict:
        return {
            "text": self.text,
            "speaker": self.speaker,
            "source_file": self.source_file,
            "source_line": self.source_line,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Utterance":
        return cls(
            text=rec["text"],
            speaker=rec["speaker"],
            source_file=rec["source_file"],
            source_line=int(rec["source_line"]),
        )


@dataclass
class Transcript:
    file_id: str
    utterances: list[Utterance] = field(default_factory=list)
    skipped_lines: list[int] = field(default_factory=list)


class ChatParseError(ValueError):
    """Raised when a transcript cannot be decoded or parsed at all."""


def clean_utterance(raw: str) -> str:
    """Apply the fixed cleaning rule list to one main-tier line.

    Rules, in order:
      1. resolve retracing (<...> [/], [//], [///] and single-word retraces)
         to the final form;
      2. strip all remaining bracketed annotation codes;
      3. drop event/filler tokens (&-prefixed), unintelligible markers
         (xxx/yyy/www), omitted-word tokens (0-prefixed) and +-shaped codes
         (terminators reduce to their punctuation);
      4. strip word-level markers: parentheses around omitted material keep
         their content, @-form suffixes and lengthening colons are removed;
      5. collapse whitespace;
      6. glue terminal punctuation to the preceding word.
    """
    text = _RETRACE_ANGLE_RE.sub(" ", raw)
    text = _RETRACE_WORD_RE.sub(" ", text)
    text = _BRACKET_RE.sub(" ", text)
    text = _ANGLE_CHARS_RE.sub(" ", text)

    tokens: list[str] = []
    for tok in text.split():
        if tok in _UNINTELLIGIBLE:
            continue
        if tok.startswith("&"):
            continue
        if tok.startswith("0"):
            continue
        if tok.startswith("+"):
            # Terminators like +... or +/. reduce to their punctuation mark.
            mark = next((ch for ch in ("?", "!", ".") if ch in tok), None)
            if mark:
                tokens.append(mark)
            continue
        tok = tok.replace("(", "").replace(")", "")
        tok = tok.split("@", 1)[0]
        tok = tok.replace(":", "")
        tok = tok.replace("‡", "").replace("„", "")
        if tok:
            tokens.append(tok)

    glued: list[str] = []
    for tok in tokens:
        if tok in TERMINAL_PUNCT and glued:
            glued[-1] = glued[-1].rstrip("".join(TERMINAL_PUNCT)) + tok
        elif tok not in TERMINAL_PUNCT:
            glued.append(tok)

    if not any(any(ch.isalnum() for ch in tok) for tok in glued):
        return ""
    return " ".join(glued)


def _decode(raw_file: bytes | IO[bytes]) -> str:
    data = raw_file if isinstance(raw_file, bytes) else raw_file.read()
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ChatParseError(f"input is not UTF-8 text: {exc}") from exc


def _logical_lines(text: str) -> Iterator[tuple[int, str]]:
    """Yield (line_number, line) with tab-continued lines joined."""
    pending: tuple[int, str] | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("\t") and pending is not None:
            pending = (pending[0], pending[1] + " " + line.strip())
            continue
        if pending is not None:
            yield pending
        pending = (lineno, line.rstrip("\n"))
    if pending is not None:
        yield pending


def parse_chat(
    raw_file: bytes | IO[bytes],
    keep_tiers: Iterable[str] | None = None,
    file_id: str = "<stream>",
) -> Transcript:
    """Parse one CHAT transcript into cleaned utterances.

    keep_tiers=None keeps every main tier except the child tiers (CHI).
    Header (@) and dependent (%) lines are dropped.  A main-tier line with no
    ":" after the tier code is a recoverable warning: skipped and counted in
    Transcript.skipped_lines.
    """
    keep = frozenset(keep_tiers) if keep_tiers is not None else None
    transcript = Transcript(file_id=file_id)
    for lineno, line in _logical_lines(_decode(raw_file)):
        if not line or line.startswith("@") or line.startswith("%"):
            continue
        if not line.startswith("*"):
            continue
        m = _TIER_RE.match(line)
        if m is None:
            log.warning("%s:%d: malformed tier line skipped", file_id, lineno)
            transcript.skipped_lines.append(lineno)
            continue
        speaker, body = m.group(1), m.group(2)
        if keep is None:
            if speaker in CHILD_TIERS:
                continue
        elif speaker not in keep:
            continue
        text = clean_utterance(body)
        if not text:
            continue
        transcript.utterances.append(
            Utterance(text=text, speaker=speaker, source_file=file_id, source_line=lineno)
        )
    return transcript


def parse_chat_file(path: str | Path, keep_tiers: Iterable[str] | None = None) -> Transcript:
    path = Path(path)
    with open(path, "rb") as fh:
        return parse_chat(fh, keep_tiers=keep_tiers, file_id=path.name)


def ingest_dir(
    root: str | Path, keep_tiers: Iterable[str] | None = None
) -> list[Transcript]:
    """Parse every .cha file under root, merged deterministically by file name."""
    paths = sorted(Path(root).rglob("*.cha"), key=lambda p: p.name)
    if not paths:
        raise ChatParseError(f"no .cha files under {root}")
    return [parse_chat_file(p, keep_tiers=keep_tiers) for p in paths]


def filter_short(utterances: list[Utterance], min_words: int = 3) -> list[Utterance]:
    """Drop utterances with fewer than min_words words, preserving order."""
    return [u for u in utterances if len(u.words) >= min_words]


def select_budget(transcripts: list[Transcript], word_budget: int) -> list[Utterance]:
    """Concatenate utterances in transcript order up to a word budget.

    Truncates at the last utterance whose inclusion keeps the cumulative
    word count <= word_budget.
    """
    if word_budget < 0:
        raise ValueError("word_budget must be nonnegative")
    selected: list[Utterance] = []
    total = 0
    for utt in (u for t in transcripts for u in t.utterances):
        n = len(utt.words)
        if total + n > word_budget:
            break
        selected.append(utt)
        total += n
    if not selected and word_budget > 0:
        log.warning("word budget %d admits no utterances", word_budget)
    log.info("selected %d utterances, %d/%d words", len(selected), total, word_budget)
    return selected


def write_utterances(path: str | Path, utterances: Iterable[Utterance]) -> str:
    """Emit utterances as line-delimited JSON records; returns content digest."""
    return write_jsonl(path, (u.to_record() for u in utterances))


def read_utterances(path: str | Path) -> list[Utterance]:
    return [Utterance.from_record(rec) for rec in read_jsonl(path)]
