/** Acceptance criteria for the training bridge, on the committed fixture
 * artifacts (10k-word dataset, batch-8 schedules emitted by the pipeline). */

import { describe, expect, it } from "vitest";

import { DESK_PROFILE, REFERENCE_PROFILE, withOverrides } from "../src/config.js";
import { loadSchedule } from "../src/loader.js";
import { updateOrderProbe } from "../src/probe.js";
import { train, type TraceEntry } from "../src/train.js";

const DATASET = "fixtures/dataset.jsonl";
const ADJACENT = "fixtures/adjacent.schedule.jsonl";
const CONCAT = "fixtures/concat.schedule.jsonl";

function report(name: string, ok: boolean, detail: string) {
  console.log(`[${ok ? "PASS" : "FAIL"}] ${name}  (${detail})`);
}

describe("acceptance", () => {
  it("update-order contract: zero violations on the adjacent-batch schedule", () => {
    const t0 = performance.now();
    const loaded = loadSchedule(ADJACENT, DATASET);
    const cfg = withOverrides(DESK_PROFILE, { epochs: 1 });
    const result = train(loaded, cfg);
    const probe = updateOrderProbe(result.trace, loaded);
    const elapsed = (performance.now() - t0) / 1000;
    const ok =
      probe.applicable &&
      probe.violations.length === 0 &&
      probe.checkedPairs > 0 &&
      result.trace.length === loaded.batches.length &&
      elapsed < 300;
    report(
      "update-order contract (desk scale, batch 8, 1 epoch)",
      ok,
      `${probe.checkedPairs} pairs, ${probe.violations.length} violations, ${elapsed.toFixed(1)}s`
    );
    expect(ok).toBe(true);
  });

  it("training sanity: final-epoch mean loss beats the first epoch over 3 epochs", () => {
    const loaded = loadSchedule(ADJACENT, DATASET);
    const cfg = withOverrides(DESK_PROFILE, { epochs: 3, seed: 42 });
    const result = train(loaded, cfg);
    const first = result.epochMeanLoss[0];
    const last = result.epochMeanLoss[2];
    const ok =
      last < first && result.trace.length === loaded.batches.length * 3;
    report("training sanity (3 epochs, seed-pinned)", ok, `${first.toFixed(4)} -> ${last.toFixed(4)}`);
    expect(ok).toBe(true);
    // steps stay strictly increasing across epochs
    for (let i = 1; i < result.trace.length; i++) {
      expect(result.trace[i].step).toBeGreaterThan(result.trace[i - 1].step);
    }
  });

  it("probe flags a mis-batched loader", () => {
    const loaded = loadSchedule(ADJACENT, DATASET);
    // Fabricate a trace in which both members of one set land in one step.
    const vsSlot = loaded.batches
      .flatMap((b) => b.slots)
      .find((s) => s.vs !== null && s.member === 0)!;
    const vsId = vsSlot.vs!;
    const partner = loaded.batches
      .flatMap((b) => b.slots)
      .find((s) => s.vs === vsId && s.member === 1)!;
    const trace: TraceEntry[] = loaded.batches.map((batch, i) => ({
      step: i,
      epoch: 0,
      batchIndex: batch.index,
      slots: batch.slots.filter((s) => s !== partner),
    }));
    const home = trace.findIndex((e) => e.slots.includes(vsSlot));
    trace[home] = { ...trace[home], slots: [...trace[home].slots, partner] };
    const probe = updateOrderProbe(trace, loaded);
    const flagged = probe.violations.some((v) => v.vsId === vsId);
    report("probe vs mis-batched loader", flagged, `violations=${probe.violations.length}`);
    expect(flagged).toBe(true);
  });

  it("probe reports method-not-applicable for sequential concatenation", () => {
    const loaded = loadSchedule(CONCAT, DATASET);
    const trace: TraceEntry[] = loaded.batches.map((batch, i) => ({
      step: i,
      epoch: 0,
      batchIndex: batch.index,
      slots: batch.slots,
    }));
    const probe = updateOrderProbe(trace, loaded);
    report("probe on concat schedule", !probe.applicable, probe.reason ?? "");
    expect(probe.applicable).toBe(false);
    expect(probe.reason).toMatch(/method-not-applicable/);
  });

  it("profiles mirror the reference hyperparameters", () => {
    expect(REFERENCE_PROFILE.model).toMatchObject({
      layers: 12,
      heads: 12,
      hidden: 768,
      dropout: 0.1,
      layerNormEps: 1e-5,
      initializerRange: 0.02,
      vocabSize: 50257,
    });
    expect(REFERENCE_PROFILE.optimizer).toMatchObject({
      algorithm: "adamw",
      learningRate: 5e-5,
      betas: [0.9, 0.999],
      weightDecay: 0.0,
    });
    expect(REFERENCE_PROFILE.scheduler).toBe("linear");
    expect(REFERENCE_PROFILE.epochs).toBe(3);
    expect(REFERENCE_PROFILE.batchSize).toBe(64);
    expect(DESK_PROFILE.model.layers).toBe(2);
    expect(DESK_PROFILE.batchSize).toBe(8);
  });
});
