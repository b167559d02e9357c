"""Turn a composed dataset into an ordered batch schedule.

Two presentation methods: sequential concatenation joins each variation
set's members into one training sequence; the adjacent-batch method places
member j of a set into batch b+j, so the trainer performs a parameter
update between successive members of the same set.  On shuffled-condition
datasets both methods degenerate to plain order-preserving batching.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .composer import KIND_VS, Dataset
from .util import stable_json

SCHEDULE_FORMAT = "varsets-schedule"
SCHEDULE_VERSION = 1

METHOD_CONCAT = "sequential_concat"
METHOD_ADJACENT = "adjacent_batch"
METHODS = (METHOD_CONCAT, METHOD_ADJACENT)

CONCAT_JOINER = " "


class SchedulerError(ValueError):
    pass


class ScheduleIOError(ValueError):
    pass


@dataclass(frozen=True)
class SlotRef:
    """One batch slot.  A concatenated variation-set line covers several
    dataset sequences, so sequence ids are a tuple; plain slots hold one id.
    member_offsets are UTF-8 byte offsets of each member within the joined
    line."""

    sequence_ids: tuple[int, ...]
    vs_id: int | None = None
    member_index: int | None = None
    member_offsets: tuple[int, ...] | None = None


@dataclass
class Batch:
    index: int
    slots: list[SlotRef] = field(default_factory=list)


@dataclass
class BatchSchedule:
    method: str
    batch_size: int
    batches: list[Batch]
    dataset_digest: str

    @property
    def slot_count(self) -> int:
        return sum(len(b.slots) for b in self.batches)

    @property
    def covered_sequences(self) -> int:
        return sum(len(s.sequence_ids) for b in self.batches for s in b.slots)


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    violations: tuple[str, ...]

    @property
    def first_violation(self) -> str | None:
        return self.violations[0] if self.violations else None


def _vs_blocks(dataset: Dataset) -> tuple[list[tuple[int, list[int]]], list[int]]:
    """Contiguous variation-set blocks plus filler ids, in dataset order."""
    blocks: list[tuple[int, list[int]]] = []
    filler: list[int] = []
    current_vs: int | None = None
    for i, seq in enumerate(dataset.sequences):
        if seq.kind == KIND_VS:
            if seq.vs_id == current_vs and blocks:
                blocks[-1][1].append(i)
            else:
                blocks.append((seq.vs_id, [i]))
                current_vs = seq.vs_id
        else:
            filler.append(i)
            current_vs = None
    return blocks, filler


def _plain_slots(dataset: Dataset) -> list[SlotRef]:
    return [
        SlotRef(sequence_ids=(i,), vs_id=s.vs_id, member_index=s.member_index)
        for i, s in enumerate(dataset.sequences)
    ]


def _chunk(slots: list[SlotRef], batch_size: int) -> list[Batch]:
    return [
        Batch(index=i, slots=slots[start : start + batch_size])
        for i, start in enumerate(range(0, len(slots), batch_size))
    ]


def slot_text(slot: SlotRef, dataset: Dataset) -> str:
    return CONCAT_JOINER.join(dataset.sequences[i].text for i in slot.sequence_ids)


def schedule_sequential_concat(dataset: Dataset, batch_size: int) -> BatchSchedule:
    """Each variation set becomes one space-joined training sequence; filler
    utterances are one sequence each; sequences fill batches in dataset
    order.  Shuffled-condition datasets batch plainly (members are already
    scattered)."""
    if batch_size < 1:
        raise SchedulerError("batch_size must be >= 1")
    if dataset.config.condition == "shuffled":
        slots = _plain_slots(dataset)
    else:
        blocks, _ = _vs_blocks(dataset)
        slots = []
        block_iter = {ids[0]: (vs_id, ids) for vs_id, ids in blocks}
        i = 0
        n = len(dataset.sequences)
        while i < n:
            if i in block_iter:
                vs_id, ids = block_iter[i]
                offsets = []
                pos = 0
                for sid in ids:
                    offsets.append(pos)
                    pos += len(dataset.sequences[sid].text.encode("utf-8")) + len(CONCAT_JOINER)
                slots.append(
                    SlotRef(sequence_ids=tuple(ids), vs_id=vs_id, member_offsets=tuple(offsets))
                )
                i = ids[-1] + 1
            else:
                seq = dataset.sequences[i]
                slots.append(SlotRef(sequence_ids=(i,), vs_id=seq.vs_id, member_index=seq.member_index))
                i += 1
    return BatchSchedule(
        method=METHOD_CONCAT,
        batch_size=batch_size,
        batches=_chunk(slots, batch_size),
        dataset_digest=dataset.manifest_hash,
    )


def schedule_adjacent_batch(dataset: Dataset, batch_size: int) -> BatchSchedule:
    """Place member j of each set in batch b+j.

    Set starts are packed round-robin so up to batch_size sets are in flight;
    remaining capacity in each batch is filled with filler in dataset order.
    When sets and filler run out the tail ramps down (only then may non-final
    batches be short).
    """
    if batch_size < 1:
        raise SchedulerError("batch_size must be >= 1")
    if dataset.config.condition == "shuffled":
        return BatchSchedule(
            method=METHOD_ADJACENT,
            batch_size=batch_size,
            batches=_chunk(_plain_slots(dataset), batch_size),
            dataset_digest=dataset.manifest_hash,
        )
    blocks, filler = _vs_blocks(dataset)
    pending = deque(blocks)
    filler_q = deque(filler)
    active: list[tuple[int, list[int], int]] = []  # (vs_id, member seq ids, next member)
    batches: list[Batch] = []
    while pending or active or filler_q:
        slots: list[SlotRef] = []
        still_active: list[tuple[int, list[int], int]] = []
        for vs_id, ids, m in active:
            slots.append(SlotRef(sequence_ids=(ids[m],), vs_id=vs_id, member_index=m))
            if m + 1 < len(ids):
                still_active.append((vs_id, ids, m + 1))
        if len(slots) > batch_size:
            overflow = slots[batch_size]
            raise SchedulerError(
                f"infeasible packing: {len(slots)} in-flight members exceed batch size "
                f"{batch_size}; first unplaceable member vs_id={overflow.vs_id} "
                f"member={overflow.member_index}"
            )
        active = still_active
        while len(slots) < batch_size and pending:
            vs_id, ids = pending.popleft()
            slots.append(SlotRef(sequence_ids=(ids[0],), vs_id=vs_id, member_index=0))
            if len(ids) > 1:
                active.append((vs_id, ids, 1))
        while len(slots) < batch_size and filler_q:
            slots.append(SlotRef(sequence_ids=(filler_q.popleft(),)))
        batches.append(Batch(index=len(batches), slots=slots))
    return BatchSchedule(
        method=METHOD_ADJACENT,
        batch_size=batch_size,
        batches=batches,
        dataset_digest=dataset.manifest_hash,
    )


def verify_schedule(
    schedule: BatchSchedule, dataset: Dataset, expected_method: str | None = None
) -> VerifyReport:
    """Check partition, batch-size bounds, and the adjacency contract.

    Adjacency (member j's batch = member 0's batch + j, for every set) is
    checked for adjacent_batch schedules over consecutive-condition datasets.
    """
    violations: list[str] = []
    if expected_method is not None and schedule.method != expected_method:
        violations.append(
            f"method-mismatch: schedule method is {schedule.method}, expected {expected_method}"
        )
        return VerifyReport(ok=False, violations=tuple(violations))
    if schedule.method not in METHODS:
        violations.append(f"unknown method {schedule.method!r}")
    if schedule.dataset_digest != dataset.manifest_hash:
        violations.append("dataset digest mismatch")

    seen: dict[int, int] = {}
    for b_pos, batch in enumerate(schedule.batches):
        if batch.index != b_pos:
            violations.append(f"batch index {batch.index} out of order at position {b_pos}")
        if len(batch.slots) > schedule.batch_size:
            violations.append(f"batch {b_pos} has {len(batch.slots)} slots > {schedule.batch_size}")
        for slot in batch.slots:
            for sid in slot.sequence_ids:
                if sid in seen:
                    violations.append(f"sequence {sid} appears in batches {seen[sid]} and {b_pos}")
                seen[sid] = b_pos
    missing = [i for i in range(len(dataset.sequences)) if i not in seen]
    if missing:
        violations.append(f"{len(missing)} sequences missing from schedule (first: {missing[0]})")
    extra = [i for i in seen if not 0 <= i < len(dataset.sequences)]
    if extra:
        violations.append(f"schedule references unknown sequences (first: {extra[0]})")

    if schedule.method == METHOD_ADJACENT and dataset.config.condition == "consecutive":
        member_batches: dict[int, dict[int, int]] = {}
        for b_pos, batch in enumerate(schedule.batches):
            for slot in batch.slots:
                if slot.vs_id is not None and slot.member_index is not None:
                    member_batches.setdefault(slot.vs_id, {})[slot.member_index] = b_pos
        for vs_id, members in sorted(member_batches.items()):
            if 0 not in members:
                violations.append(f"vs_id {vs_id}: member 0 missing from schedule")
                continue
            base = members[0]
            for j, b in sorted(members.items()):
                if b != base + j:
                    violations.append(
                        f"vs_id {vs_id}: member {j} in batch {b}, expected {base + j}"
                    )
    return VerifyReport(ok=not violations, violations=tuple(violations))


def _slot_to_record(slot: SlotRef) -> dict:
    rec: dict = {"seq": list(slot.sequence_ids)}
    if slot.vs_id is not None:
        rec["vs"] = slot.vs_id
    if slot.member_index is not None:
        rec["member"] = slot.member_index
    if slot.member_offsets is not None:
        rec["offsets"] = list(slot.member_offsets)
    return rec


def _slot_from_record(rec: dict) -> SlotRef:
    return SlotRef(
        sequence_ids=tuple(rec["seq"]),
        vs_id=rec.get("vs"),
        member_index=rec.get("member"),
        member_offsets=tuple(rec["offsets"]) if "offsets" in rec else None,
    )


def serialize_schedule(schedule: BatchSchedule) -> bytes:
    header = {
        "format": SCHEDULE_FORMAT,
        "version": SCHEDULE_VERSION,
        "method": schedule.method,
        "batch_size": schedule.batch_size,
        "dataset_digest": schedule.dataset_digest,
        "batch_count": len(schedule.batches),
        "slot_count": schedule.slot_count,
        "sequence_count": schedule.covered_sequences,
    }
    lines = [stable_json(header)]
    for batch in schedule.batches:
        lines.append(
            stable_json({"index": batch.index, "slots": [_slot_to_record(s) for s in batch.slots]})
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def deserialize_schedule(data: bytes, dataset: Dataset | None = None) -> BatchSchedule:
    """Parse a serialized schedule; refuses truncated files and, when the
    dataset is supplied, digest mismatches."""
    try:
        lines = data.decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ScheduleIOError(f"schedule is not UTF-8: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ScheduleIOError("empty schedule file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ScheduleIOError(f"bad schedule header: {exc}") from exc
    if header.get("format") != SCHEDULE_FORMAT:
        raise ScheduleIOError(f"not a {SCHEDULE_FORMAT} file")
    if header.get("version") != SCHEDULE_VERSION:
        raise ScheduleIOError(f"unsupported schedule version {header.get('version')}")
    batch_count = header["batch_count"]
    body = lines[1:]
    if len(body) != batch_count:
        raise ScheduleIOError(
            f"truncated or padded schedule: header promises {batch_count} batches, found {len(body)}"
        )
    batches = []
    for line in body:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScheduleIOError(f"bad batch line: {exc}") from exc
        batches.append(
            Batch(index=rec["index"], slots=[_slot_from_record(s) for s in rec["slots"]])
        )
    schedule = BatchSchedule(
        method=header["method"],
        batch_size=header["batch_size"],
        batches=batches,
        dataset_digest=header["dataset_digest"],
    )
    if schedule.slot_count != header["slot_count"]:
        raise ScheduleIOError("slot count does not match header")
    if dataset is not None and schedule.dataset_digest != dataset.manifest_hash:
        raise ScheduleIOError("schedule references a different dataset (digest mismatch)")
    return schedule


def write_schedule(schedule: BatchSchedule, path: str | Path) -> bytes:
    data = serialize_schedule(schedule)
    Path(path).write_bytes(data)
    return data


def read_schedule(path: str | Path, dataset: Dataset | None = None) -> BatchSchedule:
    return deserialize_schedule(Path(path).read_bytes(), dataset)
