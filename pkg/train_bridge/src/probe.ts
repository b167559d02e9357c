/** Update-order probe: on adjacent-batch schedules, the trainer must have
 * performed a parameter update between successive members of every
 * variation set. */

import type { LoadedSchedule } from "./loader.js";
import type { TraceEntry } from "./train.js";

export interface Violation {
  vsId: number;
  epoch: number;
  member: number;
  stepEarlier: number;
  stepLater: number;
}

export interface ProbeReport {
  applicable: boolean;
  reason?: string;
  checkedPairs: number;
  violations: Violation[];
}

export function updateOrderProbe(trace: TraceEntry[], loaded: LoadedSchedule): ProbeReport {
  if (loaded.method !== "adjacent_batch") {
    return {
      applicable: false,
      reason: `method-not-applicable: ${loaded.method}`,
      checkedPairs: 0,
      violations: [],
    };
  }
  // (epoch, vsId, member) -> optimizer step of the batch that consumed it
  const stepOf = new Map<string, number>();
  for (const entry of trace) {
    for (const slot of entry.slots) {
      if (slot.vs !== null && slot.member !== null) {
        stepOf.set(`${entry.epoch}:${slot.vs}:${slot.member}`, entry.step);
      }
    }
  }
  const epochs = new Set(trace.map((e) => e.epoch));
  const setLengths = new Map<number, number>();
  for (const seq of loaded.sequences) {
    if (seq.vsId !== null && seq.memberIndex !== null) {
      setLengths.set(seq.vsId, Math.max(setLengths.get(seq.vsId) ?? 0, seq.memberIndex + 1));
    }
  }
  const violations: Violation[] = [];
  let checkedPairs = 0;
  for (const epoch of epochs) {
    for (const [vsId, length] of setLengths) {
      for (let member = 0; member + 1 < length; member++) {
        const a = stepOf.get(`${epoch}:${vsId}:${member}`);
        const b = stepOf.get(`${epoch}:${vsId}:${member + 1}`);
        if (a === undefined || b === undefined) {
          violations.push({ vsId, epoch, member, stepEarlier: a ?? -1, stepLater: b ?? -1 });
          continue;
        }
        checkedPairs++;
        if (b <= a) {
          violations.push({ vsId, epoch, member, stepEarlier: a, stepLater: b });
        }
      }
    }
  }
  return { applicable: true, checkedPairs, violations };
}
