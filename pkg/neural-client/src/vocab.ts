/** The toolkit's vocabulary file: token TAB id per line, ids dense from 0. */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export interface Vocabulary {
  idToToken: string[];
  tokenToId: Map<string, number>;
  eosId: number;
  unkId: number;
  /** SHA-256 over the exact file bytes: the handshake contract. */
  fileHash: string;
}

export function loadVocabulary(path: string): Vocabulary {
  const bytes = readFileSync(path);
  const fileHash = createHash("sha256").update(bytes).digest("hex");
  const entries = new Map<number, string>();
  for (const line of bytes.toString("utf-8").split("\n")) {
    if (!line) continue;
    const parts = line.split("\t");
    if (parts.length !== 2) {
      throw new Error(`bad vocabulary line: ${JSON.stringify(line)}`);
    }
    entries.set(Number(parts[1]), parts[0]);
  }
  const idToToken: string[] = [];
  for (let i = 0; i < entries.size; i++) {
    const token = entries.get(i);
    if (token === undefined) {
      throw new Error(`vocabulary ids are not dense: missing ${i}`);
    }
    idToToken.push(token);
  }
  const tokenToId = new Map(idToToken.map((t, i) => [t, i] as const));
  const eosId = tokenToId.get("<eos>");
  const unkId = tokenToId.get("<unk>");
  if (eosId === undefined || unkId === undefined) {
    throw new Error("vocabulary must contain <eos> and <unk>");
  }
  return { idToToken, tokenToId, eosId, unkId, fileHash };
}

/** Prepared BPE text (one space-joined sentence per line) to id rows.

Mid-file empty lines are legitimate empty sources (truncation level 0); only
the phantom row after a trailing newline is dropped. */
export function encodeLines(path: string, vocab: Vocabulary): number[][] {
  const text = readFileSync(path, "utf-8");
  const lines = text.split("\n");
  if (text.endsWith("\n")) {
    lines.pop();
  }
  return lines.map((line) =>
    line === "" ? [] : line.split(" ").map((tok) => vocab.tokenToId.get(tok) ?? vocab.unkId),
  );
}
