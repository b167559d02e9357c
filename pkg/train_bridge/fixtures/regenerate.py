"""Rebuild the bridge fixtures through the varsets CLI.

Run from this directory: python3 regenerate.py
"""

import itertools
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).parent

SUBJECTS = ("you", "we", "they", "i")
VERBS = ("want", "see", "hold", "like", "take", "find", "put")
NOUNS = ("ball", "cup", "teddy", "book", "straw", "blanket", "truck", "spoon")
TAILS = ("there", "now", "here", "today")


def build_corpus(root: Path, n_utts: int = 2800) -> None:
    corpus = root / "cha"
    if corpus.exists():
        shutil.rmtree(corpus)
    corpus.mkdir(parents=True)
    combos = itertools.cycle(
        f"*MOT:\t{s} {v} the {n} {t} ."
        for s, v, n, t in itertools.product(SUBJECTS, VERBS, NOUNS, TAILS)
    )
    lines = ["@UTF8", "@Begin", "@Participants:\tMOT Mother, CHI Target_Child"]
    lines.extend(next(combos) for _ in range(n_utts))
    lines.append("@End")
    (corpus / "bridge.cha").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cli(*args: str) -> None:
    subprocess.run([sys.executable, "-m", "varsets.cli", *args], check=True, cwd=HERE)


def main() -> None:
    build_corpus(HERE)
    cli("ingest", "--corpus-dir", "cha", "--out", "records.jsonl", "--min-words", "3")
    cli("synth", "--records", "records.jsonl", "--out", "synth.jsonl",
        "--seed", "11", "--target-words", "5000")
    cli("compose", "--filler", "records.jsonl", "--synth", "synth.jsonl",
        "--ratio", "40", "--budget", "10000", "--seed", "11", "--out", "dataset.jsonl")
    cli("schedule", "--dataset", "dataset.jsonl", "--method", "adjacent_batch",
        "--batch-size", "8", "--out", "adjacent.schedule.jsonl")
    cli("schedule", "--dataset", "dataset.jsonl", "--method", "sequential_concat",
        "--batch-size", "8", "--out", "concat.schedule.jsonl")
    shutil.rmtree(HERE / "cha")
    (HERE / "records.jsonl").unlink()
    (HERE / "synth.jsonl").unlink()
    print("fixtures regenerated")


if __name__ == "__main__":
    main()
