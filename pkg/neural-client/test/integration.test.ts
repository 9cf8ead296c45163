/**
 * End-to-end: toolkit-prepared data in, trained artifact out, protocol
 * conformance against both a raw socket-level client and the toolkit's own
 * serve-check command.  Training runs are deliberately tiny.
 */

import { ChildProcessWithoutNullStreams, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { TinySeq2Seq } from "../src/model.js";
import { trainModel } from "../src/train.js";
import { encodeLines, loadVocabulary } from "../src/vocab.js";

const work = mkdtempSync(join(tmpdir(), "ncint-"));
const data = join(work, "data");
const bpe = join(work, "bpe");
const prep = join(work, "prep");

function toolkit(...args: string[]): void {
  execFileSync("constrainlab", args, { stdio: "pipe" });
}

beforeAll(() => {
  toolkit("toy-corpus", "--out", data, "--seed", "7");
  toolkit(
    "learn-bpe", "--source", join(data, "train.src"), "--target", join(data, "train.tgt"),
    "--merges", "4000", "--out", bpe,
  );
  for (const split of ["train", "dev"]) {
    toolkit(
      "prepare",
      "--source", join(data, `${split}.src`), "--target", join(data, `${split}.tgt`),
      "--split", split,
      "--merges", join(bpe, "merges.txt"), "--vocab", join(bpe, "vocab.tsv"),
      "--s", "100", "--out", prep,
    );
  }
}, 120_000);

const trainOptions = {
  sourcePath: () => join(prep, "train.bpe.src"),
  targetPath: () => join(prep, "train.bpe.tgt"),
  vocabPath: () => join(prep, "vocab.tsv"),
};

function shortTraining(outDir: string, seed: number, labelSmoothing: number) {
  return trainModel({
    sourcePath: trainOptions.sourcePath(),
    targetPath: trainOptions.targetPath(),
    vocabPath: trainOptions.vocabPath(),
    outDir,
    epochs: 2,
    seed,
    labelSmoothing,
    batchSize: 16,
    learningRate: 0.005,
    limit: 160,
  });
}

class LineClient {
  private proc: ChildProcessWithoutNullStreams;
  private buffer = "";
  private waiters: ((line: string) => void)[] = [];

  constructor(modelPath: string, vocabPath: string) {
    this.proc = spawn("node", ["dist/serve.js", "--model", modelPath, "--vocab", vocabPath], {
      cwd: join(import.meta.dirname, ".."),
    });
    this.proc.stdout.setEncoding("utf-8");
    this.proc.stdout.on("data", (chunk: string) => {
      this.buffer += chunk;
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        this.waiters.shift()?.(line);
      }
    });
  }

  ask(message: unknown): Promise<Record<string, unknown>> {
    return new Promise((resolve) => {
      this.waiters.push((line) => resolve(JSON.parse(line)));
      this.proc.stdin.write(JSON.stringify(message) + "\n");
    });
  }

  askRaw(line: string): Promise<Record<string, unknown>> {
    return new Promise((resolve) => {
      this.waiters.push((reply) => resolve(JSON.parse(reply)));
      this.proc.stdin.write(line + "\n");
    });
  }

  close(): void {
    this.proc.kill();
  }
}

describe("training", () => {
  it("one short run trains, saves, loads, and serves deterministically", () => {
    const result = shortTraining(join(work, "m1"), 1, 0);
    expect(Number.isFinite(result.finalLoss)).toBe(true);
    expect(result.losses[result.losses.length - 1]).toBeLessThan(result.losses[0]);
    const model = TinySeq2Seq.deserialize(readFileSync(result.artifactPath, "utf-8"));
    const vocab = loadVocabulary(trainOptions.vocabPath());
    expect(model.config.vocabSize).toBe(vocab.idToToken.length);
  }, 300_000);

  it("same seed twice gives identical final loss to six decimals", () => {
    const a = shortTraining(join(work, "det-a"), 9, 0);
    const b = shortTraining(join(work, "det-b"), 9, 0);
    expect(a.finalLoss.toFixed(6)).toBe(b.finalLoss.toFixed(6));
  }, 600_000);

  it("label smoothing raises mean predictive entropy on dev prefixes", () => {
    const plain = shortTraining(join(work, "eps0"), 5, 0);
    const smoothed = shortTraining(join(work, "eps01"), 5, 0.1);
    const vocab = loadVocabulary(trainOptions.vocabPath());
    const devSources = encodeLines(join(prep, "dev.bpe.src"), vocab).slice(0, 20);
    const devTargets = encodeLines(join(prep, "dev.bpe.tgt"), vocab).slice(0, 20);
    const m0 = TinySeq2Seq.deserialize(readFileSync(plain.artifactPath, "utf-8"));
    const m1 = TinySeq2Seq.deserialize(readFileSync(smoothed.artifactPath, "utf-8"));

    const meanEntropy = (model: TinySeq2Seq): number => {
      let total = 0;
      let count = 0;
      for (let i = 0; i < devSources.length; i++) {
        for (let p = 0; p <= Math.min(devTargets[i].length, 2); p++) {
          const logprobs = model.nextLogprobs(devSources[i], devTargets[i].slice(0, p));
          let h = 0;
          for (const lp of logprobs) {
            const prob = Math.exp(lp);
            if (prob > 0) h -= prob * lp;
          }
          total += h;
          count += 1;
        }
      }
      return total / count;
    };

    expect(meanEntropy(m1)).toBeGreaterThan(meanEntropy(m0));
  }, 600_000);
});

describe("serving", () => {
  let client: LineClient;
  let vocabHash: string;
  let artifact: string;

  beforeAll(() => {
    artifact = join(work, "m1", "model.json");
    vocabHash = loadVocabulary(trainOptions.vocabPath()).fileHash;
    client = new LineClient(artifact, trainOptions.vocabPath());
  });

  afterAll(() => client?.close());

  it("accepts the handshake and rejects a wrong hash", async () => {
    const ok = await client.ask({ op: "hello", version: 1, vocab_hash: vocabHash });
    expect(ok.op).toBe("hello");
    expect(ok.vocab_hash).toBe(vocabHash);
    const bad = await client.ask({ op: "hello", version: 1, vocab_hash: "deadbeef" });
    expect(bad.op).toBe("error");
  });

  it("normalizes 1000 random dist responses within 1e-6", async () => {
    const vocab = loadVocabulary(trainOptions.vocabPath());
    const v = vocab.idToToken.length;
    let state = 12345;
    const next = () => {
      state = (state * 1103515245 + 12345) % 2147483648;
      return state;
    };
    for (let i = 0; i < 1000; i++) {
      const source = Array.from({ length: next() % 4 }, () => 2 + (next() % (v - 2)));
      const prefix = Array.from({ length: next() % 4 }, () => 2 + (next() % (v - 2)));
      const reply = await client.ask({ op: "dist", source, prefix });
      expect(reply.op).toBe("dist");
      const logprobs = reply.logprobs as number[];
      expect(logprobs.length).toBe(v);
      const sum = logprobs.reduce((a, x) => a + Math.exp(x), 0);
      expect(Math.abs(sum - 1)).toBeLessThan(1e-6);
    }
  }, 300_000);

  it("answers after a malformed line (session continues)", async () => {
    const err = await client.askRaw("definitely not json");
    expect(err.op).toBe("error");
    const reply = await client.ask({ op: "dist", source: [], prefix: [] });
    expect(reply.op).toBe("dist");
  });

  it("is reproducible across two server restarts", async () => {
    const probe = { op: "dist", source: [5, 9], prefix: [3] };
    const first = new LineClient(artifact, trainOptions.vocabPath());
    const a = await first.ask(probe);
    first.close();
    const second = new LineClient(artifact, trainOptions.vocabPath());
    const b = await second.ask(probe);
    second.close();
    expect(a).toEqual(b);
  }, 120_000);

  it("passes the toolkit's serve-check conformance suite", () => {
    const out = execFileSync(
      "constrainlab",
      [
        "serve-check",
        "--vocab", trainOptions.vocabPath(),
        "--cmd", "node", join(import.meta.dirname, "..", "dist", "serve.js"),
        "--model", artifact,
        "--vocab", trainOptions.vocabPath(),
      ],
      { encoding: "utf-8" },
    );
    expect(out).toContain("PASS handshake");
    expect(out).toContain("PASS normalization");
    expect(out).toContain("PASS determinism");
    expect(out).toContain("PASS batch-order");
    expect(out).toContain("PASS error-handling");
    expect(out).not.toContain("FAIL");
  }, 300_000);
});
