/** Training loop: one AdamW step per schedule batch, in schedule order.
 *
 * Each slot is one training example ("line by line"); examples are padded to
 * the longest line in their batch and the loss is masked on padding.  The
 * update trace records, per optimizer step, exactly which slots were
 * consumed, which is what the update-order probe audits.
 *
 * Dropout is carried in the config for fidelity with the reference
 * hyperparameters but the desk-scale trainer only supports dropout 0.
 */

import type { TrainConfig } from "./config.js";
import type { Batch, LoadedSchedule, SlotRef } from "./loader.js";
import { slotText } from "./loader.js";
import { createModel, forwardBackward, zeroGrads, type Model } from "./model.js";
import { BpeTokenizer, PAD } from "./tokenizer.js";

export interface TraceEntry {
  step: number; // optimizer step index, strictly increasing
  epoch: number;
  batchIndex: number;
  slots: SlotRef[];
}

export interface LossPoint {
  step: number;
  epoch: number;
  loss: number;
}

export interface TrainResult {
  model: Model;
  tokenizer: BpeTokenizer;
  lossCurve: LossPoint[];
  trace: TraceEntry[];
  epochMeanLoss: number[];
  trainedTexts: string[];
}

export function encodeBatch(
  tokenizer: BpeTokenizer,
  texts: string[],
  blockSize: number
): { inputs: Int32Array; targets: Int32Array; B: number; T: number } {
  const encoded = texts.map((t) => tokenizer.encode(t, { bos: true, eos: true }).slice(0, blockSize + 1));
  const B = encoded.length;
  const T = Math.max(...encoded.map((ids) => ids.length - 1));
  const inputs = new Int32Array(B * T).fill(PAD);
  const targets = new Int32Array(B * T).fill(PAD);
  for (let b = 0; b < B; b++) {
    const ids = encoded[b];
    for (let t = 0; t + 1 < ids.length; t++) {
      inputs[b * T + t] = ids[t];
      targets[b * T + t] = ids[t + 1];
    }
  }
  return { inputs, targets, B, T };
}

export function train(loaded: LoadedSchedule, cfg: TrainConfig): TrainResult {
  if (cfg.model.dropout !== 0) {
    throw new Error("desk-scale trainer supports dropout 0 only");
  }
  if (cfg.batchSize !== loaded.batchSize) {
    throw new Error(
      `config batch size ${cfg.batchSize} does not match schedule batch size ${loaded.batchSize}`
    );
  }
  const texts: string[] = [];
  for (const batch of loaded.batches) {
    for (const slot of batch.slots) texts.push(slotText(slot, loaded.sequences));
  }
  const tokenizer = BpeTokenizer.train(texts, cfg.model.vocabSize);
  const model = createModel({ ...cfg.model, vocabSize: tokenizer.size }, cfg.seed);

  const m = new Float64Array(model.params.length);
  const v = new Float64Array(model.params.length);
  const [beta1, beta2] = cfg.optimizer.betas;
  const baseLr = cfg.optimizer.learningRate;
  const wd = cfg.optimizer.weightDecay;
  const epsAdam = 1e-8;
  const totalSteps = loaded.batches.length * cfg.epochs;

  const lossCurve: LossPoint[] = [];
  const trace: TraceEntry[] = [];
  const epochMeanLoss: number[] = [];
  let step = 0;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    let epochLoss = 0;
    for (const batch of loaded.batches) {
      const batchTexts = batch.slots.map((s) => slotText(s, loaded.sequences));
      const { inputs, targets, B, T } = encodeBatch(tokenizer, batchTexts, cfg.model.blockSize);
      zeroGrads(model);
      const { loss } = forwardBackward(model, inputs, targets, B, T, true);
      if (!Number.isFinite(loss)) {
        throw new Error(
          `non-finite loss at step ${step} (epoch ${epoch}, batch ${batch.index}): ${loss}`
        );
      }
      const lr = cfg.scheduler === "linear" ? baseLr * (1 - step / totalSteps) : baseLr;
      const t = step + 1;
      const correction1 = 1 - Math.pow(beta1, t);
      const correction2 = 1 - Math.pow(beta2, t);
      const params = model.params;
      const grads = model.grads;
      for (let i = 0; i < params.length; i++) {
        m[i] = beta1 * m[i] + (1 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1 - beta2) * grads[i] * grads[i];
        const mHat = m[i] / correction1;
        const vHat = v[i] / correction2;
        params[i] -= lr * (mHat / (Math.sqrt(vHat) + epsAdam) + wd * params[i]);
      }
      lossCurve.push({ step, epoch, loss });
      trace.push({ step, epoch, batchIndex: batch.index, slots: batch.slots });
      epochLoss += loss;
      step++;
    }
    epochMeanLoss.push(epochLoss / loaded.batches.length);
  }
  return { model, tokenizer, lossCurve, trace, epochMeanLoss, trainedTexts: texts };
}

/** Forward-only mean loss over one batch list; used by tests. */
export function meanLoss(
  model: Model,
  tokenizer: BpeTokenizer,
  loaded: LoadedSchedule,
  batches: Batch[]
): number {
  let total = 0;
  for (const batch of batches) {
    const texts = batch.slots.map((s) => slotText(s, loaded.sequences));
    const { inputs, targets, B, T } = encodeBatch(tokenizer, texts, model.cfg.blockSize);
    total += forwardBackward(model, inputs, targets, B, T, false).loss;
  }
  return total / batches.length;
}
