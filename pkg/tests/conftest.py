import random
from pathlib import Path

import pytest

from varsets.chat_ingest import Utterance
from varsets.vs_synth import Lexicon, SynthConfig, synthesize_pool

FIXTURES = Path(__file__).parent / "fixtures"


def make_unrelated(n: int, prefix: str = "f", words: int = 4, speaker: str = "MOT") -> list[Utterance]:
    """Utterances with pairwise-disjoint content vocabulary: no two can link."""
    out = []
    for i in range(n):
        content = " ".join(f"{prefix}{i}{ch}" for ch in "abcdefg"[: words - 1])
        out.append(Utterance(f"the {content}.", speaker, f"{prefix}-fixture", i))
    return out


# Seed sentences built from starter-lexicon vocabulary so substitution sites
# always exist; objects are indexed to keep different sets distinguishable.
_TEMPLATES = (
    "you want the {noun}{i}.",
    "you can put the {noun}{i} there.",
    "we need the {noun}{i} now.",
    "they like the big {noun}{i}.",
    "can you see the {noun}{i}?",
    "do you want the {noun}{i}?",
    "where is the little {noun}{i}?",
    "i can hold the {noun}{i}.",
)
_NOUNS = ("ball", "cup", "straw", "book", "blanket", "spoon", "teddy", "truck")


def make_sources(n: int, speaker: str = "MOT") -> list[Utterance]:
    out = []
    for i in range(n):
        template = _TEMPLATES[i % len(_TEMPLATES)]
        noun = _NOUNS[(i // len(_TEMPLATES)) % len(_NOUNS)]
        out.append(Utterance(template.format(noun=noun, i=i), speaker, "src-fixture", i))
    return out


def tiny_lexicon() -> Lexicon:
    return Lexicon(
        substitutions={"want": ("need",)},
        addable_phrases={"start": (), "end": ()},
        auxiliary_table={"can": "can", "do": "do", "you": "do"},
    )


@pytest.fixture(scope="session")
def synth_pool_small():
    return synthesize_pool(make_sources(60), SynthConfig(seed=401), target_words=4000)


@pytest.fixture(scope="session")
def big_pools():
    """Filler and synthetic pools sized for a 100k-word budget grid."""
    filler = make_unrelated(60_000, prefix="g")
    pool = synthesize_pool(make_sources(4000), SynthConfig(seed=77), target_words=115_000)
    return filler, pool
