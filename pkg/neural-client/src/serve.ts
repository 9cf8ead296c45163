/** Serve a trained artifact over the bridge protocol.
 *
 *   node dist/serve.js --model model.json --vocab vocab.tsv            # stdio
 *   node dist/serve.js --model model.json --vocab vocab.tsv --tcp HOST PORT
 *
 * One session at a time; the server is stateless between requests apart
 * from the loaded model, and evaluation is deterministic.
 */

import { readFileSync } from "node:fs";
import { createServer } from "node:net";

import { TinySeq2Seq } from "./model.js";
import {
  NEG_INF_SENTINEL,
  PROTOCOL_VERSION,
  Request,
  distLine,
  errorLine,
  helloLine,
  parseRequest,
  splitLines,
} from "./protocol.js";
import { Vocabulary, loadVocabulary } from "./vocab.js";

export function answer(line: string, model: TinySeq2Seq, vocab: Vocabulary): string {
  const parsed = parseRequest(line, vocab.idToToken.length);
  if (typeof parsed === "string") {
    return errorLine(parsed);
  }
  const request = parsed as Request;
  if (request.op === "hello") {
    if (request.version !== PROTOCOL_VERSION) {
      return errorLine(`unsupported version ${request.version}`);
    }
    if (request.vocab_hash !== vocab.fileHash) {
      return errorLine("vocab_hash mismatch");
    }
    return helloLine(vocab.idToToken.length, vocab.fileHash);
  }
  const raw = model.nextLogprobs(request.source, request.prefix);
  const logprobs = Array.from(raw, (x) => (Number.isFinite(x) ? x : NEG_INF_SENTINEL));
  return distLine(logprobs);
}

function serveStream(
  input: NodeJS.ReadableStream,
  write: (line: string) => void,
  model: TinySeq2Seq,
  vocab: Vocabulary,
): void {
  let buffer = "";
  input.setEncoding?.("utf-8");
  input.on("data", (chunk: string | Buffer) => {
    buffer += chunk.toString();
    const { lines, rest } = splitLines(buffer);
    buffer = rest;
    for (const line of lines) {
      if (line === "") continue;
      write(answer(line, model, vocab));
    }
  });
}

function main(argv: string[]): void {
  const get = (flag: string): string => {
    const i = argv.indexOf(flag);
    if (i < 0 || i + 1 >= argv.length) throw new Error(`missing required flag ${flag}`);
    return argv[i + 1];
  };
  const vocab = loadVocabulary(get("--vocab"));
  const model = TinySeq2Seq.deserialize(readFileSync(get("--model"), "utf-8"));
  if (model.config.vocabSize !== vocab.idToToken.length) {
    throw new Error(
      `artifact vocabulary size ${model.config.vocabSize} != file size ${vocab.idToToken.length}`,
    );
  }
  const tcpIndex = argv.indexOf("--tcp");
  if (tcpIndex >= 0) {
    const host = argv[tcpIndex + 1];
    const port = Number(argv[tcpIndex + 2]);
    const server = createServer((socket) => {
      serveStream(socket, (line) => socket.write(line + "\n"), model, vocab);
    });
    server.listen(port, host, () => {
      console.error(`serving on ${host}:${port}`);
    });
  } else {
    serveStream(process.stdin, (line) => process.stdout.write(line + "\n"), model, vocab);
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("serve.js")) {
  try {
    main(process.argv.slice(2));
  } catch (error) {
    console.error(JSON.stringify({ error: String(error) }));
    process.exit(1);
  }
}
