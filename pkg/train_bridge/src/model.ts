/** GPT-style decoder with hand-written forward/backward passes.
 *
 * Parameters live in one flat Float64Array (grads in a parallel array), so
 * the optimizer is a plain loop.  The backward pass is checked against
 * central finite differences in the test suite.
 */

import type { ModelConfig } from "./config.js";
import { gaussian, mulberry32, type Rng } from "./rng.js";
import { PAD } from "./tokenizer.js";

export interface TensorSpec {
  offset: number;
  rows: number;
  cols: number;
}

export interface Model {
  cfg: ModelConfig;
  params: Float64Array;
  grads: Float64Array;
  specs: Map<string, TensorSpec>;
}

function layout(cfg: ModelConfig): { specs: Map<string, TensorSpec>; total: number } {
  const specs = new Map<string, TensorSpec>();
  let offset = 0;
  const add = (name: string, rows: number, cols: number) => {
    specs.set(name, { offset, rows, cols });
    offset += rows * cols;
  };
  const H = cfg.hidden;
  add("wte", cfg.vocabSize, H);
  add("wpe", cfg.blockSize, H);
  for (let l = 0; l < cfg.layers; l++) {
    add(`l${l}.ln1g`, H, 1);
    add(`l${l}.ln1b`, H, 1);
    add(`l${l}.wqkv`, H, 3 * H);
    add(`l${l}.bqkv`, 3 * H, 1);
    add(`l${l}.wproj`, H, H);
    add(`l${l}.bproj`, H, 1);
    add(`l${l}.ln2g`, H, 1);
    add(`l${l}.ln2b`, H, 1);
    add(`l${l}.wfc`, H, 4 * H);
    add(`l${l}.bfc`, 4 * H, 1);
    add(`l${l}.wout`, 4 * H, H);
    add(`l${l}.bout`, H, 1);
  }
  add("lnfg", H, 1);
  add("lnfb", H, 1);
  add("wlm", H, cfg.vocabSize);
  return { specs, total: offset };
}

export function createModel(cfg: ModelConfig, seed: number): Model {
  if (cfg.hidden % cfg.heads !== 0) {
    throw new Error("hidden size must divide evenly into heads");
  }
  const { specs, total } = layout(cfg);
  const params = new Float64Array(total);
  const grads = new Float64Array(total);
  const gauss = gaussian(mulberry32(seed));
  for (const [name, spec] of specs) {
    const n = spec.rows * spec.cols;
    if (name.endsWith("g")) {
      params.fill(1, spec.offset, spec.offset + n); // layer-norm gains
    } else if (name.endsWith("b") && spec.cols === 1) {
      // biases stay zero
    } else {
      for (let i = 0; i < n; i++) {
        params[spec.offset + i] = gauss() * cfg.initializerRange;
      }
    }
  }
  return { cfg, params, grads, specs };
}

export function paramCount(model: Model): number {
  return model.params.length;
}

export function zeroGrads(model: Model): void {
  model.grads.fill(0);
}

const GELU_C = Math.sqrt(2 / Math.PI);
const GELU_A = 0.044715;

function gelu(x: number): number {
  return 0.5 * x * (1 + Math.tanh(GELU_C * (x + GELU_A * x * x * x)));
}

function geluGrad(x: number): number {
  const t = Math.tanh(GELU_C * (x + GELU_A * x * x * x));
  return 0.5 * (1 + t) + 0.5 * x * (1 - t * t) * GELU_C * (1 + 3 * GELU_A * x * x);
}

interface LayerScratch {
  xIn: Float64Array; // [N,H] residual stream entering the layer
  xhat1: Float64Array;
  rstd1: Float64Array;
  qkv: Float64Array; // [N,3H]
  probs: Float64Array; // [B,nh,T,T]
  ctx: Float64Array; // [N,H]
  xMid: Float64Array; // [N,H] residual stream after attention
  xhat2: Float64Array;
  rstd2: Float64Array;
  f: Float64Array; // [N,4H] MLP preactivation
  u: Float64Array; // [N,4H] gelu output
}

export interface StepStats {
  loss: number;
  tokens: number;
}

/** Forward pass (and, when computeGrads, backward accumulation into
 * model.grads) over one padded batch.  inputs/targets are [B*T]; positions
 * with target == PAD are masked out of the loss. */
export function forwardBackward(
  model: Model,
  inputs: Int32Array,
  targets: Int32Array,
  B: number,
  T: number,
  computeGrads: boolean
): StepStats {
  const { cfg, params, grads, specs } = model;
  const H = cfg.hidden;
  const nh = cfg.heads;
  const hd = H / nh;
  const V = cfg.vocabSize;
  const F = 4 * H;
  const N = B * T;
  const eps = cfg.layerNormEps;
  const scale = 1 / Math.sqrt(hd);

  const at = (name: string) => specs.get(name)!.offset;

  const wte = at("wte");
  const wpe = at("wpe");
  const wlm = at("wlm");
  const lnfg = at("lnfg");
  const lnfb = at("lnfb");

  // ---- forward ----
  const x0 = new Float64Array(N * H);
  for (let b = 0; b < B; b++) {
    for (let t = 0; t < T; t++) {
      const n = b * T + t;
      const tok = inputs[n];
      for (let h = 0; h < H; h++) {
        x0[n * H + h] = params[wte + tok * H + h] + params[wpe + t * H + h];
      }
    }
  }

  const layerNorm = (
    src: Float64Array,
    gOff: number,
    bOff: number,
    xhat: Float64Array,
    rstd: Float64Array,
    dst: Float64Array
  ) => {
    for (let n = 0; n < N; n++) {
      let mean = 0;
      for (let h = 0; h < H; h++) mean += src[n * H + h];
      mean /= H;
      let variance = 0;
      for (let h = 0; h < H; h++) {
        const d = src[n * H + h] - mean;
        variance += d * d;
      }
      variance /= H;
      const r = 1 / Math.sqrt(variance + eps);
      rstd[n] = r;
      for (let h = 0; h < H; h++) {
        const xh = (src[n * H + h] - mean) * r;
        xhat[n * H + h] = xh;
        dst[n * H + h] = params[gOff + h] * xh + params[bOff + h];
      }
    }
  };

  const scratch: LayerScratch[] = [];
  let x = x0;
  const a1 = new Float64Array(N * H);
  const a2 = new Float64Array(N * H);
  for (let l = 0; l < cfg.layers; l++) {
    const s: LayerScratch = {
      xIn: x,
      xhat1: new Float64Array(N * H),
      rstd1: new Float64Array(N),
      qkv: new Float64Array(N * 3 * H),
      probs: new Float64Array(B * nh * T * T),
      ctx: new Float64Array(N * H),
      xMid: new Float64Array(N * H),
      xhat2: new Float64Array(N * H),
      rstd2: new Float64Array(N),
      f: new Float64Array(N * F),
      u: new Float64Array(N * F),
    };
    scratch.push(s);

    layerNorm(x, at(`l${l}.ln1g`), at(`l${l}.ln1b`), s.xhat1, s.rstd1, a1);

    const wqkv = at(`l${l}.wqkv`);
    const bqkv = at(`l${l}.bqkv`);
    for (let n = 0; n < N; n++) {
      for (let j = 0; j < 3 * H; j++) {
        let acc = params[bqkv + j];
        for (let h = 0; h < H; h++) {
          acc += a1[n * H + h] * params[wqkv + h * 3 * H + j];
        }
        s.qkv[n * 3 * H + j] = acc;
      }
    }

    // causal attention per head
    for (let b = 0; b < B; b++) {
      for (let head = 0; head < nh; head++) {
        const qOff = head * hd;
        const kOff = H + head * hd;
        const vOff = 2 * H + head * hd;
        for (let ti = 0; ti < T; ti++) {
          const ni = b * T + ti;
          const pRow = ((b * nh + head) * T + ti) * T;
          let maxScore = -Infinity;
          const row = new Float64Array(ti + 1);
          for (let tj = 0; tj <= ti; tj++) {
            const nj = b * T + tj;
            let dot = 0;
            for (let h = 0; h < hd; h++) {
              dot += s.qkv[ni * 3 * H + qOff + h] * s.qkv[nj * 3 * H + kOff + h];
            }
            dot *= scale;
            row[tj] = dot;
            if (dot > maxScore) maxScore = dot;
          }
          let denom = 0;
          for (let tj = 0; tj <= ti; tj++) {
            row[tj] = Math.exp(row[tj] - maxScore);
            denom += row[tj];
          }
          for (let tj = 0; tj <= ti; tj++) {
            s.probs[pRow + tj] = row[tj] / denom;
          }
          for (let h = 0; h < hd; h++) {
            let acc = 0;
            for (let tj = 0; tj <= ti; tj++) {
              acc += s.probs[pRow + tj] * s.qkv[(b * T + tj) * 3 * H + vOff + h];
            }
            s.ctx[ni * H + qOff + h] = acc;
          }
        }
      }
    }

    const wproj = at(`l${l}.wproj`);
    const bproj = at(`l${l}.bproj`);
    for (let n = 0; n < N; n++) {
      for (let j = 0; j < H; j++) {
        let acc = params[bproj + j];
        for (let h = 0; h < H; h++) {
          acc += s.ctx[n * H + h] * params[wproj + h * H + j];
        }
        s.xMid[n * H + j] = x[n * H + j] + acc;
      }
    }

    layerNorm(s.xMid, at(`l${l}.ln2g`), at(`l${l}.ln2b`), s.xhat2, s.rstd2, a2);

    const wfc = at(`l${l}.wfc`);
    const bfc = at(`l${l}.bfc`);
    for (let n = 0; n < N; n++) {
      for (let j = 0; j < F; j++) {
        let acc = params[bfc + j];
        for (let h = 0; h < H; h++) {
          acc += a2[n * H + h] * params[wfc + h * F + j];
        }
        s.f[n * F + j] = acc;
        s.u[n * F + j] = gelu(acc);
      }
    }

    const wout = at(`l${l}.wout`);
    const bout = at(`l${l}.bout`);
    const xNext = new Float64Array(N * H);
    for (let n = 0; n < N; n++) {
      for (let j = 0; j < H; j++) {
        let acc = params[bout + j];
        for (let k = 0; k < F; k++) {
          acc += s.u[n * F + k] * params[wout + k * H + j];
        }
        xNext[n * H + j] = s.xMid[n * H + j] + acc;
      }
    }
    x = xNext;
  }

  const xhatF = new Float64Array(N * H);
  const rstdF = new Float64Array(N);
  const xf = new Float64Array(N * H);
  layerNorm(x, lnfg, lnfb, xhatF, rstdF, xf);

  // logits + masked cross-entropy
  const probs = new Float64Array(N * V);
  let alive = 0;
  for (let n = 0; n < N; n++) if (targets[n] !== PAD) alive++;
  let loss = 0;
  const logitRow = new Float64Array(V);
  for (let n = 0; n < N; n++) {
    if (targets[n] === PAD) continue;
    let maxLogit = -Infinity;
    for (let v = 0; v < V; v++) {
      let acc = 0;
      for (let h = 0; h < H; h++) {
        acc += xf[n * H + h] * params[wlm + h * V + v];
      }
      logitRow[v] = acc;
      if (acc > maxLogit) maxLogit = acc;
    }
    let denom = 0;
    for (let v = 0; v < V; v++) {
      logitRow[v] = Math.exp(logitRow[v] - maxLogit);
      denom += logitRow[v];
    }
    for (let v = 0; v < V; v++) probs[n * V + v] = logitRow[v] / denom;
    loss += -Math.log(probs[n * V + targets[n]]);
  }
  loss /= Math.max(1, alive);

  if (!computeGrads) {
    return { loss, tokens: alive };
  }

  // ---- backward ----
  const dxf = new Float64Array(N * H);
  for (let n = 0; n < N; n++) {
    if (targets[n] === PAD) continue;
    for (let v = 0; v < V; v++) {
      let d = probs[n * V + v];
      if (v === targets[n]) d -= 1;
      d /= alive;
      if (d === 0) continue;
      for (let h = 0; h < H; h++) {
        grads[wlm + h * V + v] += xf[n * H + h] * d;
        dxf[n * H + h] += params[wlm + h * V + v] * d;
      }
    }
  }

  const layerNormBackward = (
    dy: Float64Array,
    xhat: Float64Array,
    rstd: Float64Array,
    gOff: number,
    bOff: number,
    dx: Float64Array
  ) => {
    for (let n = 0; n < N; n++) {
      let meanD = 0;
      let meanDX = 0;
      for (let h = 0; h < H; h++) {
        const dxh = dy[n * H + h] * params[gOff + h];
        meanD += dxh;
        meanDX += dxh * xhat[n * H + h];
        grads[gOff + h] += dy[n * H + h] * xhat[n * H + h];
        grads[bOff + h] += dy[n * H + h];
      }
      meanD /= H;
      meanDX /= H;
      for (let h = 0; h < H; h++) {
        const dxh = dy[n * H + h] * params[gOff + h];
        dx[n * H + h] += rstd[n] * (dxh - meanD - xhat[n * H + h] * meanDX);
      }
    }
  };

  let dx = new Float64Array(N * H); // grad wrt the residual stream (post-layer)
  layerNormBackward(dxf, xhatF, rstdF, lnfg, lnfb, dx);

  for (let l = cfg.layers - 1; l >= 0; l--) {
    const s = scratch[l];
    const wfc = at(`l${l}.wfc`);
    const bfc = at(`l${l}.bfc`);
    const wout = at(`l${l}.wout`);
    const bout = at(`l${l}.bout`);
    const wproj = at(`l${l}.wproj`);
    const bproj = at(`l${l}.bproj`);
    const wqkv = at(`l${l}.wqkv`);
    const bqkv = at(`l${l}.bqkv`);

    // recompute a2 = g2*xhat2 + b2
    const g2 = at(`l${l}.ln2g`);
    const b2 = at(`l${l}.ln2b`);
    for (let n = 0; n < N; n++) {
      for (let h = 0; h < H; h++) {
        a2[n * H + h] = params[g2 + h] * s.xhat2[n * H + h] + params[b2 + h];
      }
    }

    // MLP backward: dx is grad at xOut = xMid + mlp(a2)
    const df = new Float64Array(N * F);
    for (let n = 0; n < N; n++) {
      for (let k = 0; k < F; k++) {
        let du = 0;
        for (let j = 0; j < H; j++) {
          du += dx[n * H + j] * params[wout + k * H + j];
        }
        const dfv = du * geluGrad(s.f[n * F + k]);
        df[n * F + k] = dfv;
        grads[bfc + k] += dfv;
      }
    }
    for (let k = 0; k < F; k++) {
      for (let j = 0; j < H; j++) {
        let acc = 0;
        for (let n = 0; n < N; n++) {
          acc += s.u[n * F + k] * dx[n * H + j];
        }
        grads[wout + k * H + j] += acc;
      }
    }
    for (let j = 0; j < H; j++) {
      let acc = 0;
      for (let n = 0; n < N; n++) acc += dx[n * H + j];
      grads[bout + j] += acc;
    }
    const da2 = new Float64Array(N * H);
    for (let n = 0; n < N; n++) {
      for (let h = 0; h < H; h++) {
        let acc = 0;
        for (let k = 0; k < F; k++) {
          acc += df[n * F + k] * params[wfc + h * F + k];
        }
        da2[n * H + h] = acc;
      }
    }
    for (let h = 0; h < H; h++) {
      for (let k = 0; k < F; k++) {
        let acc = 0;
        for (let n = 0; n < N; n++) {
          acc += a2[n * H + h] * df[n * F + k];
        }
        grads[wfc + h * F + k] += acc;
      }
    }

    // grad at xMid = residual passthrough + LN2 backward
    const dxMid = new Float64Array(N * H);
    dxMid.set(dx);
    layerNormBackward(da2, s.xhat2, s.rstd2, g2, b2, dxMid);

    // attention backward: xMid = xIn + proj(ctx)
    const dctx = new Float64Array(N * H);
    for (let n = 0; n < N; n++) {
      for (let h = 0; h < H; h++) {
        let acc = 0;
        for (let j = 0; j < H; j++) {
          acc += dxMid[n * H + j] * params[wproj + h * H + j];
        }
        dctx[n * H + h] = acc;
      }
    }
    for (let h = 0; h < H; h++) {
      for (let j = 0; j < H; j++) {
        let acc = 0;
        for (let n = 0; n < N; n++) {
          acc += s.ctx[n * H + h] * dxMid[n * H + j];
        }
        grads[wproj + h * H + j] += acc;
      }
    }
    for (let j = 0; j < H; j++) {
      let acc = 0;
      for (let n = 0; n < N; n++) acc += dxMid[n * H + j];
      grads[bproj + j] += acc;
    }

    const dqkv = new Float64Array(N * 3 * H);
    for (let b = 0; b < B; b++) {
      for (let head = 0; head < nh; head++) {
        const qOff = head * hd;
        const kOff = H + head * hd;
        const vOff = 2 * H + head * hd;
        for (let ti = 0; ti < T; ti++) {
          const ni = b * T + ti;
          const pRow = ((b * nh + head) * T + ti) * T;
          const dpRow = new Float64Array(ti + 1);
          for (let tj = 0; tj <= ti; tj++) {
            const nj = b * T + tj;
            let dp = 0;
            for (let h = 0; h < hd; h++) {
              dp += dctx[ni * H + qOff + h] * s.qkv[nj * 3 * H + vOff + h];
              dqkv[nj * 3 * H + vOff + h] += s.probs[pRow + tj] * dctx[ni * H + qOff + h];
            }
            dpRow[tj] = dp;
          }
          let dot = 0;
          for (let tj = 0; tj <= ti; tj++) dot += s.probs[pRow + tj] * dpRow[tj];
          for (let tj = 0; tj <= ti; tj++) {
            const nj = b * T + tj;
            const ds = s.probs[pRow + tj] * (dpRow[tj] - dot) * scale;
            for (let h = 0; h < hd; h++) {
              dqkv[ni * 3 * H + qOff + h] += ds * s.qkv[nj * 3 * H + kOff + h];
              dqkv[nj * 3 * H + kOff + h] += ds * s.qkv[ni * 3 * H + qOff + h];
            }
          }
        }
      }
    }

    // recompute a1 and backprop the qkv projection
    const g1 = at(`l${l}.ln1g`);
    const b1 = at(`l${l}.ln1b`);
    for (let n = 0; n < N; n++) {
      for (let h = 0; h < H; h++) {
        a1[n * H + h] = params[g1 + h] * s.xhat1[n * H + h] + params[b1 + h];
      }
    }
    const da1 = new Float64Array(N * H);
    for (let n = 0; n < N; n++) {
      for (let h = 0; h < H; h++) {
        let acc = 0;
        for (let j = 0; j < 3 * H; j++) {
          acc += dqkv[n * 3 * H + j] * params[wqkv + h * 3 * H + j];
        }
        da1[n * H + h] = acc;
      }
    }
    for (let h = 0; h < H; h++) {
      for (let j = 0; j < 3 * H; j++) {
        let acc = 0;
        for (let n = 0; n < N; n++) {
          acc += a1[n * H + h] * dqkv[n * 3 * H + j];
        }
        grads[wqkv + h * 3 * H + j] += acc;
      }
    }
    for (let j = 0; j < 3 * H; j++) {
      let acc = 0;
      for (let n = 0; n < N; n++) acc += dqkv[n * 3 * H + j];
      grads[bqkv + j] += acc;
    }

    const dxIn = new Float64Array(N * H);
    dxIn.set(dxMid); // residual passthrough
    layerNormBackward(da1, s.xhat1, s.rstd1, g1, b1, dxIn);
    dx = dxIn;
  }

  // embeddings
  for (let b = 0; b < B; b++) {
    for (let t = 0; t < T; t++) {
      const n = b * T + t;
      const tok = inputs[n];
      for (let h = 0; h < H; h++) {
        grads[wte + tok * H + h] += dx[n * H + h];
        grads[wpe + t * H + h] += dx[n * H + h];
      }
    }
  }

  return { loss, tokens: alive };
}
