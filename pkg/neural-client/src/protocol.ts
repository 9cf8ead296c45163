/** Bridge wire protocol: newline-delimited JSON, one object per line. */

export const PROTOCOL_VERSION = 1;
export const NEG_INF_SENTINEL = -1e30;

export interface HelloRequest {
  op: "hello";
  version: number;
  vocab_hash: string;
}

export interface DistRequest {
  op: "dist";
  source: number[];
  prefix: number[];
}

export type Request = HelloRequest | DistRequest;

export function splitLines(buffer: string): { lines: string[]; rest: string } {
  const parts = buffer.split("\n");
  const rest = parts.pop() ?? "";
  return { lines: parts, rest };
}

export function errorLine(message: string): string {
  return JSON.stringify({ op: "error", message });
}

export function helloLine(vocabSize: number, vocabHash: string): string {
  return JSON.stringify({
    op: "hello",
    version: PROTOCOL_VERSION,
    vocab_size: vocabSize,
    vocab_hash: vocabHash,
  });
}

export function distLine(logprobs: number[]): string {
  return JSON.stringify({ op: "dist", logprobs });
}

/** Parse one request line; returns an error string on malformed input. */
export function parseRequest(line: string, vocabSize: number): Request | string {
  let message: unknown;
  try {
    message = JSON.parse(line);
  } catch {
    return `malformed message: not JSON`;
  }
  if (typeof message !== "object" || message === null) {
    return "malformed message: not an object";
  }
  const op = (message as { op?: unknown }).op;
  if (op === "hello") {
    const m = message as { version?: unknown; vocab_hash?: unknown };
    if (typeof m.version !== "number" || typeof m.vocab_hash !== "string") {
      return "malformed hello";
    }
    return { op: "hello", version: m.version, vocab_hash: m.vocab_hash };
  }
  if (op === "dist") {
    const m = message as { source?: unknown; prefix?: unknown };
    if (!Array.isArray(m.source) || !Array.isArray(m.prefix)) {
      return "dist needs source and prefix lists";
    }
    for (const tok of [...m.source, ...m.prefix]) {
      if (!Number.isInteger(tok) || tok < 0 || tok >= vocabSize) {
        return `token id out of range: ${tok}`;
      }
    }
    return { op: "dist", source: m.source as number[], prefix: m.prefix as number[] };
  }
  return `unknown op ${JSON.stringify(op)}`;
}
