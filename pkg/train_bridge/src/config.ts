/** Training configuration: the published-hyperparameter profile and the
 * desk-scale profile used in CI. */

export interface ModelConfig {
  layers: number;
  heads: number;
  hidden: number;
  dropout: number;
  layerNormEps: number;
  initializerRange: number;
  vocabSize: number;
  blockSize: number;
}

export interface OptimizerConfig {
  algorithm: "adamw";
  learningRate: number;
  betas: [number, number];
  weightDecay: number;
}

export interface TrainConfig {
  model: ModelConfig;
  optimizer: OptimizerConfig;
  scheduler: "linear" | "constant";
  epochs: number;
  batchSize: number;
  seed: number;
}

/** Full-scale reference settings (not exercised by the test suite). */
export const REFERENCE_PROFILE: TrainConfig = {
  model: {
    layers: 12,
    heads: 12,
    hidden: 768,
    dropout: 0.1,
    layerNormEps: 1e-5,
    initializerRange: 0.02,
    vocabSize: 50257,
    blockSize: 1024,
  },
  optimizer: {
    algorithm: "adamw",
    learningRate: 5e-5,
    betas: [0.9, 0.999],
    weightDecay: 0.0,
  },
  scheduler: "linear",
  epochs: 3,
  batchSize: 64,
  seed: 42,
};

/** Small model that trains on a 10k-word fixture in well under a minute. */
export const DESK_PROFILE: TrainConfig = {
  model: {
    layers: 2,
    heads: 2,
    hidden: 48,
    dropout: 0.0,
    layerNormEps: 1e-5,
    initializerRange: 0.02,
    vocabSize: 384,
    blockSize: 48,
  },
  optimizer: {
    algorithm: "adamw",
    learningRate: 1e-3,
    betas: [0.9, 0.999],
    weightDecay: 0.0,
  },
  scheduler: "linear",
  epochs: 3,
  batchSize: 8,
  seed: 42,
};

export function withOverrides(base: TrainConfig, overrides: Partial<TrainConfig>): TrainConfig {
  return {
    ...base,
    ...overrides,
    model: { ...base.model, ...(overrides.model ?? {}) },
    optimizer: { ...base.optimizer, ...(overrides.optimizer ?? {}) },
  };
}
