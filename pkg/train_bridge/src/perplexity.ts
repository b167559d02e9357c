/** Token-level perplexity of a trained model on held-out text.
 *
 * The holdout must be disjoint from the training lines; disjointness is
 * enforced by comparing per-line sha256 digests.
 */

import { sha256Hex } from "./loader.js";
import { forwardBackward, type Model } from "./model.js";
import { encodeBatch } from "./train.js";
import type { BpeTokenizer } from "./tokenizer.js";

export function evalPerplexity(
  model: Model,
  tokenizer: BpeTokenizer,
  holdout: string[],
  trainedTexts: string[]
): number {
  if (holdout.length === 0) {
    throw new Error("holdout is empty");
  }
  const trainedDigests = new Set(trainedTexts.map((t) => sha256Hex(t)));
  for (const line of holdout) {
    if (trainedDigests.has(sha256Hex(line))) {
      throw new Error(`holdout line overlaps the training data: ${JSON.stringify(line)}`);
    }
  }
  let totalNll = 0;
  let totalTokens = 0;
  for (const line of holdout) {
    const { inputs, targets, B, T } = encodeBatch(tokenizer, [line], model.cfg.blockSize);
    const { loss, tokens } = forwardBackward(model, inputs, targets, B, T, false);
    totalNll += loss * tokens;
    totalTokens += tokens;
  }
  if (totalTokens === 0) {
    throw new Error("holdout contains no scoreable tokens");
  }
  return Math.exp(totalNll / totalTokens);
}
