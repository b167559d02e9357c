/** Load dataset and schedule files emitted by the varsets pipeline.
 *
 * The schedule header carries the sha256 of the dataset JSONL bytes; loading
 * refuses digest mismatches, version skew, and truncated files.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export interface DatasetSequence {
  text: string;
  kind: "vs_member" | "filler";
  vsId: number | null;
  memberIndex: number | null;
}

export interface SlotRef {
  seq: number[];
  vs: number | null;
  member: number | null;
  offsets: number[] | null;
}

export interface Batch {
  index: number;
  slots: SlotRef[];
}

export interface LoadedSchedule {
  method: "sequential_concat" | "adjacent_batch";
  batchSize: number;
  datasetDigest: string;
  batches: Batch[];
  sequences: DatasetSequence[];
}

const SCHEDULE_FORMAT = "varsets-schedule";
const SCHEDULE_VERSION = 1;

export function sha256Hex(data: Buffer | string): string {
  return createHash("sha256").update(data).digest("hex");
}

export function loadDataset(path: string): { sequences: DatasetSequence[]; digest: string } {
  const raw = readFileSync(path);
  const digest = sha256Hex(raw);
  const sequences: DatasetSequence[] = [];
  for (const line of raw.toString("utf-8").split("\n")) {
    if (!line.trim()) continue;
    const rec = JSON.parse(line);
    sequences.push({
      text: rec.text,
      kind: rec.kind,
      vsId: rec.vs_id ?? null,
      memberIndex: rec.member_index ?? null,
    });
  }
  return { sequences, digest };
}

export function loadSchedule(schedulePath: string, datasetPath: string): LoadedSchedule {
  const { sequences, digest } = loadDataset(datasetPath);
  const lines = readFileSync(schedulePath)
    .toString("utf-8")
    .split("\n")
    .filter((l) => l.trim());
  if (lines.length === 0) throw new Error("empty schedule file");
  const header = JSON.parse(lines[0]);
  if (header.format !== SCHEDULE_FORMAT) {
    throw new Error(`not a ${SCHEDULE_FORMAT} file`);
  }
  if (header.version !== SCHEDULE_VERSION) {
    throw new Error(`schedule version skew: got ${header.version}, support ${SCHEDULE_VERSION}`);
  }
  if (header.dataset_digest !== digest) {
    throw new Error("dataset digest mismatch: schedule references different data");
  }
  const body = lines.slice(1);
  if (body.length !== header.batch_count) {
    throw new Error(
      `truncated schedule: header promises ${header.batch_count} batches, found ${body.length}`
    );
  }
  const batches: Batch[] = body.map((line) => {
    const rec = JSON.parse(line);
    const slots: SlotRef[] = rec.slots.map((s: Record<string, unknown>) => ({
      seq: s.seq as number[],
      vs: (s.vs as number | undefined) ?? null,
      member: (s.member as number | undefined) ?? null,
      offsets: (s.offsets as number[] | undefined) ?? null,
    }));
    return { index: rec.index as number, slots };
  });
  let slotCount = 0;
  for (const b of batches) slotCount += b.slots.length;
  if (slotCount !== header.slot_count) {
    throw new Error("slot count does not match schedule header");
  }
  return {
    method: header.method,
    batchSize: header.batch_size,
    datasetDigest: digest,
    batches,
    sequences,
  };
}

/** One training example per slot: concatenated lines join member sentences
 * with a single space. */
export function slotText(slot: SlotRef, sequences: DatasetSequence[]): string {
  return slot.seq.map((i) => sequences[i].text).join(" ");
}

export function allSlotTexts(loaded: LoadedSchedule): string[] {
  const out: string[] = [];
  for (const batch of loaded.batches) {
    for (const slot of batch.slots) out.push(slotText(slot, loaded.sequences));
  }
  return out;
}
