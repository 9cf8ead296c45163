import { createHash } from "node:crypto";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { TinySeq2Seq, defaultConfig } from "../src/model.js";
import { encodeLines, loadVocabulary } from "../src/vocab.js";

function tinyVocabFile(): string {
  const dir = mkdtempSync(join(tmpdir(), "ncvocab-"));
  const path = join(dir, "vocab.tsv");
  const tokens = ["<eos>", "<unk>", "aa", "bb", "cc"];
  writeFileSync(path, tokens.map((t, i) => `${t}\t${i}`).join("\n") + "\n");
  return path;
}

describe("vocabulary loading", () => {
  it("reads tokens, ids, and reserved entries", () => {
    const vocab = loadVocabulary(tinyVocabFile());
    expect(vocab.idToToken).toEqual(["<eos>", "<unk>", "aa", "bb", "cc"]);
    expect(vocab.eosId).toBe(0);
    expect(vocab.unkId).toBe(1);
  });

  it("hashes the exact file bytes (the handshake contract)", () => {
    const path = tinyVocabFile();
    const vocab = loadVocabulary(path);
    const expected = createHash("sha256")
      .update(Buffer.from("<eos>\t0\n<unk>\t1\naa\t2\nbb\t3\ncc\t4\n"))
      .digest("hex");
    expect(vocab.fileHash).toBe(expected);
  });

  it("encodes prepared lines, mapping unknown pieces to UNK and keeping empty rows", () => {
    const path = tinyVocabFile();
    const vocab = loadVocabulary(path);
    const dir = mkdtempSync(join(tmpdir(), "ncdata-"));
    const file = join(dir, "x.bpe.src");
    writeFileSync(file, "aa bb\n\nzz cc\n");
    expect(encodeLines(file, vocab)).toEqual([[2, 3], [], [1, 4]]);
  });
});

describe("the tiny model", () => {
  it("produces normalized next-token distributions", () => {
    const model = new TinySeq2Seq(defaultConfig(5), 1);
    const logprobs = model.nextLogprobs([2, 3], [4]);
    expect(logprobs.length).toBe(5);
    const sum = Array.from(logprobs).reduce((a, x) => a + Math.exp(x), 0);
    expect(Math.abs(sum - 1)).toBeLessThan(1e-6);
  });

  it("is deterministic for a fixed seed, including on empty sources", () => {
    const a = new TinySeq2Seq(defaultConfig(5), 7);
    const b = new TinySeq2Seq(defaultConfig(5), 7);
    expect(Array.from(a.nextLogprobs([], []))).toEqual(Array.from(b.nextLogprobs([], [])));
    expect(Array.from(a.nextLogprobs([2], [3, 4]))).toEqual(
      Array.from(b.nextLogprobs([2], [3, 4])),
    );
  });

  it("differs across seeds", () => {
    const a = new TinySeq2Seq(defaultConfig(5), 7);
    const b = new TinySeq2Seq(defaultConfig(5), 8);
    expect(Array.from(a.nextLogprobs([], []))).not.toEqual(Array.from(b.nextLogprobs([], [])));
  });

  it("round-trips through serialization bit for bit", () => {
    const model = new TinySeq2Seq(defaultConfig(5), 3);
    const again = TinySeq2Seq.deserialize(model.serialize());
    expect(Array.from(again.nextLogprobs([2, 4], [3]))).toEqual(
      Array.from(model.nextLogprobs([2, 4], [3])),
    );
  });
});
