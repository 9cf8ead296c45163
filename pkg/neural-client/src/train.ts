/** Train the tiny encoder-decoder on toolkit-prepared files.
 *
 *   node dist/train.js --source S --target T --vocab V --out DIR \
 *       [--epochs 2] [--seed 1] [--label-smoothing 0.1] [--batch 16] [--limit N]
 *
 * Inputs are the toolkit's prepared BPE text files (already truncated at the
 * desired level) plus its vocabulary file, so tokenization is owned by
 * exactly one component.  Writes model.json and train.log.
 */

import * as tf from "@tensorflow/tfjs";
import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { TinySeq2Seq, defaultConfig } from "./model.js";
import { Vocabulary, encodeLines, loadVocabulary } from "./vocab.js";

export interface TrainOptions {
  sourcePath: string;
  targetPath: string;
  vocabPath: string;
  outDir: string;
  epochs: number;
  seed: number;
  labelSmoothing: number;
  batchSize: number;
  learningRate: number;
  limit?: number;
}

export interface TrainResult {
  finalLoss: number;
  losses: number[];
  artifactPath: string;
}

export function trainModel(options: TrainOptions): TrainResult {
  const vocab = loadVocabulary(options.vocabPath);
  let sources = encodeLines(options.sourcePath, vocab);
  let targets = encodeLines(options.targetPath, vocab);
  if (sources.length !== targets.length) {
    throw new Error(`source/target line counts differ: ${sources.length} vs ${targets.length}`);
  }
  if (sources.length === 0) {
    throw new Error("cannot train on an empty corpus");
  }
  if (options.limit !== undefined) {
    sources = sources.slice(0, options.limit);
    targets = targets.slice(0, options.limit);
  }
  const config = defaultConfig(vocab.idToToken.length);
  const model = new TinySeq2Seq(config, options.seed);
  const optimizer = tf.train.adam(options.learningRate);
  const eos = vocab.eosId;
  const v = config.vocabSize;
  const eps = options.labelSmoothing;

  const order = Array.from(sources.keys()); // fixed order: determinism is load-bearing
  const losses: number[] = [];
  const lines: string[] = [];
  for (let epoch = 0; epoch < options.epochs; epoch++) {
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start < order.length; start += options.batchSize) {
      const idx = order.slice(start, start + options.batchSize);
      const batchSources = idx.map((i) => sources[i]);
      const batchTargets = idx.map((i) => {
        const capped = targets[i].slice(0, config.maxTargetLen - 1);
        return [...capped, eos];
      });
      const maxLen = Math.max(...batchTargets.map((t) => t.length));
      const inputs = batchTargets.map((t) => [
        config.vocabSize,
        ...t.slice(0, -1),
        ...Array(maxLen - t.length).fill(config.vocabSize),
      ]);
      const labels = batchTargets.map((t) => [...t, ...Array(maxLen - t.length).fill(0)]);
      const mask = batchTargets.map((t) => [
        ...Array(t.length).fill(1),
        ...Array(maxLen - t.length).fill(0),
      ]);
      const lossValue = optimizer.minimize(
        () =>
          tf.tidy(() => {
            const logits = model.logits(batchSources, inputs);
            const logprobs = tf.logSoftmax(logits, -1);
            const oneHot = tf.oneHot(tf.tensor2d(labels, undefined, "int32"), v);
            const soft =
              eps > 0 ? oneHot.mul(1 - eps).add(eps / v) : (oneHot as tf.Tensor);
            const perToken = soft.mul(logprobs).sum(-1).neg();
            const maskT = tf.tensor2d(mask);
            return perToken.mul(maskT).sum().div(maskT.sum()) as tf.Scalar;
          }),
        true,
        Array.from(model.variables.values()),
      ) as tf.Scalar;
      const loss = lossValue.dataSync()[0];
      lossValue.dispose();
      if (!Number.isFinite(loss)) {
        throw new Error(
          `loss became ${loss} at epoch ${epoch}, batch ${batches}; ` +
            `lr ${options.learningRate}, batch size ${options.batchSize}`,
        );
      }
      epochLoss += loss;
      batches += 1;
    }
    const mean = epochLoss / batches;
    losses.push(mean);
    lines.push(`epoch ${epoch}: mean loss ${mean.toFixed(6)} over ${batches} batches`);
  }

  mkdirSync(options.outDir, { recursive: true });
  const artifactPath = join(options.outDir, "model.json");
  writeFileSync(artifactPath, model.serialize());
  writeFileSync(
    join(options.outDir, "train.log"),
    [
      `seed ${options.seed}`,
      `epochs ${options.epochs}`,
      `label_smoothing ${eps}`,
      `pairs ${sources.length}`,
      ...lines,
      `final ${losses[losses.length - 1].toFixed(6)}`,
      "",
    ].join("\n"),
  );
  return { finalLoss: losses[losses.length - 1], losses, artifactPath };
}

function parseArgs(argv: string[]): TrainOptions {
  const get = (flag: string, fallback?: string): string => {
    const i = argv.indexOf(flag);
    if (i >= 0 && i + 1 < argv.length) return argv[i + 1];
    if (fallback !== undefined) return fallback;
    throw new Error(`missing required flag ${flag}`);
  };
  const limitRaw = argv.indexOf("--limit");
  return {
    sourcePath: get("--source"),
    targetPath: get("--target"),
    vocabPath: get("--vocab"),
    outDir: get("--out"),
    epochs: Number(get("--epochs", "2")),
    seed: Number(get("--seed", "1")),
    labelSmoothing: Number(get("--label-smoothing", "0")),
    batchSize: Number(get("--batch", "16")),
    learningRate: Number(get("--lr", "0.005")),
    limit: limitRaw >= 0 ? Number(argv[limitRaw + 1]) : undefined,
  };
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("train.js")) {
  try {
    const result = trainModel(parseArgs(process.argv.slice(2)));
    console.log(`final loss ${result.finalLoss.toFixed(6)} -> ${result.artifactPath}`);
  } catch (error) {
    console.error(JSON.stringify({ error: String(error) }));
    process.exit(1);
  }
}
