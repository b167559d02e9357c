/** CLI: train a desk-scale model from a schedule and emit the loss curve,
 * update trace, probe report, and weights. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { DESK_PROFILE, REFERENCE_PROFILE, withOverrides, type TrainConfig } from "./config.js";
import { loadSchedule } from "./loader.js";
import { updateOrderProbe } from "./probe.js";
import { train } from "./train.js";

interface CliArgs {
  schedule?: string;
  dataset?: string;
  outDir: string;
  profile: "desk" | "reference";
  epochs?: number;
  batchSize?: number;
  lr?: number;
  seed?: number;
}

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = { outDir: "out", profile: "desk" };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      i++;
      if (i >= argv.length) throw new Error(`missing value for ${flag}`);
      return argv[i];
    };
    switch (flag) {
      case "--schedule": args.schedule = next(); break;
      case "--dataset": args.dataset = next(); break;
      case "--out-dir": args.outDir = next(); break;
      case "--profile": args.profile = next() as CliArgs["profile"]; break;
      case "--epochs": args.epochs = Number(next()); break;
      case "--batch-size": args.batchSize = Number(next()); break;
      case "--lr": args.lr = Number(next()); break;
      case "--seed": args.seed = Number(next()); break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.schedule || !args.dataset) {
    throw new Error("usage: train --schedule <file> --dataset <file> [--out-dir d] " +
      "[--profile desk|reference] [--epochs n] [--batch-size n] [--lr x] [--seed n]");
  }
  return args;
}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    const base = args.profile === "reference" ? REFERENCE_PROFILE : DESK_PROFILE;
    const overrides: Partial<TrainConfig> = {};
    if (args.epochs !== undefined) overrides.epochs = args.epochs;
    if (args.batchSize !== undefined) overrides.batchSize = args.batchSize;
    if (args.seed !== undefined) overrides.seed = args.seed;
    let cfg = withOverrides(base, overrides);
    if (args.lr !== undefined) {
      cfg = withOverrides(cfg, { optimizer: { ...cfg.optimizer, learningRate: args.lr } });
    }
    const loaded = loadSchedule(args.schedule!, args.dataset!);
    const result = train(loaded, cfg);
    const probe = updateOrderProbe(result.trace, loaded);

    mkdirSync(args.outDir, { recursive: true });
    writeFileSync(join(args.outDir, "loss_curve.json"), JSON.stringify(result.lossCurve) + "\n");
    writeFileSync(join(args.outDir, "update_trace.json"), JSON.stringify(result.trace) + "\n");
    writeFileSync(join(args.outDir, "probe_report.json"), JSON.stringify(probe, null, 2) + "\n");
    writeFileSync(
      join(args.outDir, "weights.json"),
      JSON.stringify({
        config: cfg,
        tokenizer: result.tokenizer.toJSON(),
        params: Buffer.from(result.model.params.buffer).toString("base64"),
      }) + "\n"
    );
    const first = result.epochMeanLoss[0];
    const last = result.epochMeanLoss[result.epochMeanLoss.length - 1];
    console.log(
      `trained ${result.trace.length} steps over ${cfg.epochs} epoch(s); ` +
        `epoch mean loss ${first.toFixed(4)} -> ${last.toFixed(4)}`
    );
    if (probe.applicable) {
      console.log(`update-order probe: ${probe.violations.length} violations ` +
        `over ${probe.checkedPairs} member pairs`);
      return probe.violations.length === 0 ? 0 : 1;
    }
    console.log(`update-order probe: ${probe.reason}`);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const isMain = process.argv[1]?.endsWith("cli.js") || process.argv[1]?.endsWith("cli.ts");
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
