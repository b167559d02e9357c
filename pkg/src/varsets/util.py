"""Shared helpers: stable JSON, content digests, seed derivation, JSONL IO."""

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

# Named PRNG + seed-derivation scheme, recorded in run manifests so datasets
# stay reproducible across tool versions.
PRNG_NAME = "python-random-mt19937"
SEED_SCHEME = "sha256-mix-v1"


def stable_json(obj: Any) -> str:
    """Serialize to a canonical single-line JSON string."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def derive_seed(seed: int, *parts: Any) -> int:
    """Mix a base seed with labels into a new 64-bit seed.

    Derivation goes through sha256 so per-item seeds are independent of
    iteration order and platform hash randomization.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


def write_jsonl(path: str | Path, records: Iterable[dict]) -> str:
    """Write records as JSON lines; returns the sha256 of the written bytes."""
    lines = [stable_json(rec) for rec in records]
    data = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
    Path(path).write_bytes(data)
    return sha256_hex(data)


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def jsonl_bytes(records: Iterable[dict]) -> bytes:
    lines = [stable_json(rec) for rec in records]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
