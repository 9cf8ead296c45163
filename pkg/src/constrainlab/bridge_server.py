"""Reference protocol server wrapping a saved in-process model.

Run as a module so tests and external tools can spawn it as a child process:

    python -m constrainlab.bridge_server --model MODEL --vocab VOCAB
    python -m constrainlab.bridge_server --model MODEL --vocab VOCAB --tcp HOST PORT
"""

from __future__ import annotations

import argparse

from .bpe import load_vocabulary
from .bridge import serve_stdio, serve_tcp
from .models import load_model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="serve a saved model over the bridge protocol")
    parser.add_argument("--model", required=True, help="model file (key-value text format)")
    parser.add_argument("--vocab", required=True, help="vocabulary file (token TAB id)")
    parser.add_argument("--tcp", nargs=2, metavar=("HOST", "PORT"), help="serve over TCP instead of stdio")
    parser.add_argument("--max-sessions", type=int, default=None, help="stop after this many TCP sessions")
    args = parser.parse_args(argv)

    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model)
    if model.vocab_size != len(vocab):
        parser.error(f"model vocabulary size {model.vocab_size} != file size {len(vocab)}")
    if args.tcp:
        serve_tcp(model, vocab, args.tcp[0], int(args.tcp[1]), max_sessions=args.max_sessions)
    else:
        serve_stdio(model, vocab)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
