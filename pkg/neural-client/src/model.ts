/** A tiny trainable encoder-decoder over the toolkit's shared vocabulary.
 *
 * Desk-scale transformer: learned token+position embeddings, two
 * pre-norm blocks per side with two-head attention (self on the encoder,
 * causal self plus cross on the decoder), and a softmax output over exactly
 * the shared vocabulary.  No dropout anywhere, so evaluation is a pure
 * function and training is deterministic for a fixed seed and data order.
 *
 * Sources always get one synthetic start token prepended so empty (fully
 * truncated) sources still give cross-attention something to attend to.
 */

import * as tf from "@tensorflow/tfjs";

export interface ModelConfig {
  vocabSize: number;
  embedSize: number; // default 64
  layers: number; // default 2
  heads: number; // default 2
  ffSize: number;
  maxSourceLen: number;
  maxTargetLen: number;
}

export function defaultConfig(vocabSize: number): ModelConfig {
  return {
    vocabSize,
    embedSize: 64,
    layers: 2,
    heads: 2,
    ffSize: 128,
    maxSourceLen: 16,
    maxTargetLen: 48,
  };
}

interface BlockVars {
  ln1G: tf.Variable;
  ln1B: tf.Variable;
  wq: tf.Variable;
  wk: tf.Variable;
  wv: tf.Variable;
  wo: tf.Variable;
  ln2G?: tf.Variable;
  ln2B?: tf.Variable;
  cq?: tf.Variable;
  ck?: tf.Variable;
  cv?: tf.Variable;
  co?: tf.Variable;
  ln3G: tf.Variable;
  ln3B: tf.Variable;
  ff1: tf.Variable;
  ff1b: tf.Variable;
  ff2: tf.Variable;
  ff2b: tf.Variable;
}

export class TinySeq2Seq {
  readonly config: ModelConfig;
  readonly variables: Map<string, tf.Variable> = new Map();
  private encBlocks: BlockVars[] = [];
  private decBlocks: BlockVars[] = [];

  constructor(config: ModelConfig, seed: number) {
    this.config = config;
    const d = config.embedSize;
    let counter = seed;
    const init = (shape: number[], name: string): tf.Variable => {
      counter += 1;
      const initializer = tf.initializers.glorotUniform({ seed: counter });
      const variable = tf.variable(initializer.apply(shape) as tf.Tensor, true);
      this.variables.set(name, variable);
      return variable;
    };
    const zeros = (shape: number[], name: string): tf.Variable => {
      const variable = tf.variable(tf.zeros(shape), true);
      this.variables.set(name, variable);
      return variable;
    };
    const ones = (shape: number[], name: string): tf.Variable => {
      const variable = tf.variable(tf.ones(shape), true);
      this.variables.set(name, variable);
      return variable;
    };

    init([config.vocabSize + 1, d], "srcEmbed"); // +1: the synthetic source-start token
    init([config.vocabSize + 1, d], "tgtEmbed"); // +1: the decoder BOS position
    init([config.maxSourceLen + 1, d], "srcPos");
    init([config.maxTargetLen + 1, d], "tgtPos");

    const block = (prefix: string, cross: boolean): BlockVars => ({
      ln1G: ones([d], `${prefix}.ln1g`),
      ln1B: zeros([d], `${prefix}.ln1b`),
      wq: init([d, d], `${prefix}.wq`),
      wk: init([d, d], `${prefix}.wk`),
      wv: init([d, d], `${prefix}.wv`),
      wo: init([d, d], `${prefix}.wo`),
      ...(cross
        ? {
            ln2G: ones([d], `${prefix}.ln2g`),
            ln2B: zeros([d], `${prefix}.ln2b`),
            cq: init([d, d], `${prefix}.cq`),
            ck: init([d, d], `${prefix}.ck`),
            cv: init([d, d], `${prefix}.cv`),
            co: init([d, d], `${prefix}.co`),
          }
        : {}),
      ln3G: ones([d], `${prefix}.ln3g`),
      ln3B: zeros([d], `${prefix}.ln3b`),
      ff1: init([d, config.ffSize], `${prefix}.ff1`),
      ff1b: zeros([config.ffSize], `${prefix}.ff1b`),
      ff2: init([config.ffSize, d], `${prefix}.ff2`),
      ff2b: zeros([d], `${prefix}.ff2b`),
    });

    for (let i = 0; i < config.layers; i++) {
      this.encBlocks.push(block(`enc${i}`, false));
      this.decBlocks.push(block(`dec${i}`, true));
    }
    init([d, config.vocabSize], "outW");
    zeros([config.vocabSize], "outB");
  }

  private layerNorm(x: tf.Tensor, gamma: tf.Variable, beta: tf.Variable): tf.Tensor {
    const mean = x.mean(-1, true);
    const variance = x.sub(mean).square().mean(-1, true);
    return x.sub(mean).div(variance.add(1e-5).sqrt()).mul(gamma).add(beta);
  }

  private attention(
    q: tf.Tensor,
    k: tf.Tensor,
    v: tf.Tensor,
    heads: number,
    causal: boolean,
  ): tf.Tensor {
    // q: [B, Tq, d]; k, v: [B, Tk, d]
    const [b, tq, d] = q.shape as [number, number, number];
    const tk = k.shape[1] as number;
    const hd = d / heads;
    const split = (t: tf.Tensor, len: number) =>
      t.reshape([b, len, heads, hd]).transpose([0, 2, 1, 3]); // [B, H, T, hd]
    const qs = split(q, tq);
    const ks = split(k, tk);
    const vs = split(v, tk);
    let scores = tf.matMul(qs, ks, false, true).div(Math.sqrt(hd)); // [B, H, Tq, Tk]
    if (causal) {
      const mask = tf.linalg
        .bandPart(tf.ones([tq, tk]), -1, 0)
        .expandDims(0)
        .expandDims(0);
      scores = scores.add(mask.sub(1).mul(1e9));
    }
    const weights = tf.softmax(scores, -1);
    const mixed = tf.matMul(weights, vs); // [B, H, Tq, hd]
    return mixed.transpose([0, 2, 1, 3]).reshape([b, tq, d]);
  }

  private encode(sourceRows: number[][]): tf.Tensor {
    const cfg = this.config;
    const padded = sourceRows.map((row) => {
      const capped = row.slice(0, cfg.maxSourceLen);
      return [cfg.vocabSize, ...capped]; // synthetic start token
    });
    const maxLen = Math.max(...padded.map((r) => r.length));
    const ids = padded.map((r) => [...r, ...Array(maxLen - r.length).fill(cfg.vocabSize)]);
    const table = this.variables.get("srcEmbed")!;
    const pos = this.variables.get("srcPos")!;
    let x = tf.gather(table, tf.tensor2d(ids, undefined, "int32")) as tf.Tensor;
    x = x.add(pos.slice([0, 0], [maxLen, cfg.embedSize]).expandDims(0));
    for (const blk of this.encBlocks) {
      const normed = this.layerNorm(x, blk.ln1G, blk.ln1B);
      const q = tf.matMul(normed, blk.wq.expandDims(0).tile([x.shape[0] as number, 1, 1]));
      const k = tf.matMul(normed, blk.wk.expandDims(0).tile([x.shape[0] as number, 1, 1]));
      const v = tf.matMul(normed, blk.wv.expandDims(0).tile([x.shape[0] as number, 1, 1]));
      const attended = this.attention(q, k, v, this.config.heads, false);
      x = x.add(tf.matMul(attended, blk.wo.expandDims(0).tile([x.shape[0] as number, 1, 1])));
      const normed2 = this.layerNorm(x, blk.ln3G, blk.ln3B);
      const ff = tf
        .matMul(normed2, blk.ff1.expandDims(0).tile([x.shape[0] as number, 1, 1]))
        .add(blk.ff1b)
        .relu();
      x = x.add(tf.matMul(ff, blk.ff2.expandDims(0).tile([x.shape[0] as number, 1, 1])).add(blk.ff2b));
    }
    return x;
  }

  /** Logits for every target position: input is BOS + target[:-1]. */
  logits(sourceRows: number[][], targetInputs: number[][]): tf.Tensor {
    const cfg = this.config;
    const memory = this.encode(sourceRows);
    const maxLen = Math.max(...targetInputs.map((r) => r.length));
    const ids = targetInputs.map((r) => [...r, ...Array(maxLen - r.length).fill(cfg.vocabSize)]);
    const table = this.variables.get("tgtEmbed")!;
    const pos = this.variables.get("tgtPos")!;
    const batch = targetInputs.length;
    let x = tf.gather(table, tf.tensor2d(ids, undefined, "int32")) as tf.Tensor;
    x = x.add(pos.slice([0, 0], [maxLen, cfg.embedSize]).expandDims(0));
    const tile = (w: tf.Variable) => w.expandDims(0).tile([batch, 1, 1]);
    for (const blk of this.decBlocks) {
      const normed = this.layerNorm(x, blk.ln1G, blk.ln1B);
      const attended = this.attention(
        tf.matMul(normed, tile(blk.wq)),
        tf.matMul(normed, tile(blk.wk)),
        tf.matMul(normed, tile(blk.wv)),
        cfg.heads,
        true,
      );
      x = x.add(tf.matMul(attended, tile(blk.wo)));
      const normed2 = this.layerNorm(x, blk.ln2G!, blk.ln2B!);
      const crossed = this.attention(
        tf.matMul(normed2, tile(blk.cq!)),
        tf.matMul(memory, tile(blk.ck!)),
        tf.matMul(memory, tile(blk.cv!)),
        cfg.heads,
        false,
      );
      x = x.add(tf.matMul(crossed, tile(blk.co!)));
      const normed3 = this.layerNorm(x, blk.ln3G, blk.ln3B);
      const ff = tf.matMul(normed3, tile(blk.ff1)).add(blk.ff1b).relu();
      x = x.add(tf.matMul(ff, tile(blk.ff2)).add(blk.ff2b));
    }
    return tf
      .matMul(x, this.variables.get("outW")!.expandDims(0).tile([batch, 1, 1]))
      .add(this.variables.get("outB")!);
  }

  /** The served quantity: log-probabilities of the next token after `prefix`. */
  nextLogprobs(source: number[], prefix: number[]): Float32Array {
    return tf.tidy(() => {
      const cfg = this.config;
      const input = [cfg.vocabSize, ...prefix.slice(-cfg.maxTargetLen)];
      const logits = this.logits([source], [input]);
      const last = logits.slice(
        [0, (input.length - 1), 0],
        [1, 1, cfg.vocabSize],
      );
      const logprobs = tf.logSoftmax(last.reshape([cfg.vocabSize]));
      return logprobs.dataSync() as Float32Array;
    });
  }

  serialize(): string {
    const payload: Record<string, { shape: number[]; values: number[] }> = {};
    for (const [name, variable] of this.variables) {
      payload[name] = {
        shape: variable.shape.slice(),
        values: Array.from(variable.dataSync() as Float32Array),
      };
    }
    return JSON.stringify({ format: "constrainlab-tinyseq2seq v1", config: this.config, weights: payload });
  }

  static deserialize(text: string): TinySeq2Seq {
    const data = JSON.parse(text) as {
      format: string;
      config: ModelConfig;
      weights: Record<string, { shape: number[]; values: number[] }>;
    };
    if (data.format !== "constrainlab-tinyseq2seq v1") {
      throw new Error(`not a tinyseq2seq artifact: ${data.format}`);
    }
    const model = new TinySeq2Seq(data.config, 0);
    for (const [name, variable] of model.variables) {
      const stored = data.weights[name];
      if (!stored) throw new Error(`artifact is missing weights for ${name}`);
      variable.assign(tf.tensor(stored.values, stored.shape as number[]));
    }
    return model;
  }
}
