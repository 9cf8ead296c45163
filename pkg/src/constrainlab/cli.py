"""Command-line surface tying the pipeline together.

Every command writes its outputs into an explicit directory together with a
run manifest (config snapshot, input file hashes, tool version, seed), and
exits nonzero with a single-line JSON error on stderr when anything fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .bpe import (
    apply_bpe,
    build_vocabulary,
    learn_bpe,
    load_merges,
    load_vocabulary,
    save_merges,
    save_vocabulary,
)
from .bridge import BridgeEndpoint, run_conformance
from .corpus import TruncationLevel, load_parallel, remove_copy_noise, truncate_corpus, write_parallel
from .decoding import DecodeConfig, ancestral_sample, beam_search, dump_hypotheses
from .experiment import SweepConfig, run_sweep, worker_count
from .metrics import EvalPair, bleu, corpus_repetition, length_ratio
from .models import fit_conditional_ngram, load_model, save_model
from .toy import ToyConfig, generate_toy_corpus, write_toy_corpus


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, args: dict, inputs: dict, seed=None) -> None:
    manifest = {
        "tool": "constrainlab",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(args.items())},
        "input_hashes": {name: _file_hash(path) for name, path in sorted(inputs.items())},
        "master_seed": seed,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_clean(source, target, split):
    return remove_copy_noise(load_parallel(source, target, split))


def cmd_toy_corpus(args) -> int:
    corpus = generate_toy_corpus(args.seed, ToyConfig())
    write_toy_corpus(corpus, args.out)
    write_manifest(args.out, "toy-corpus", {"pairs": len(corpus.train)}, {}, seed=args.seed)
    print(f"wrote toy corpus to {args.out} (train={len(corpus.train)}, dev={len(corpus.dev)}, test={len(corpus.test)})")
    return 0


def cmd_learn_bpe(args) -> int:
    corpus = _load_clean(args.source, args.target, "train")
    model = learn_bpe(corpus, args.merges)
    vocab = build_vocabulary(
        [apply_bpe(model, p.source) for p in corpus] + [apply_bpe(model, p.target) for p in corpus]
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_merges(model, out / "merges.txt")
    save_vocabulary(vocab, out / "vocab.tsv")
    write_manifest(out, "learn-bpe", {"merges": args.merges}, {"source": args.source, "target": args.target})
    print(f"learned {len(model)} merges, vocabulary of {len(vocab)} tokens -> {out}")
    return 0


def cmd_truncate(args) -> int:
    corpus = load_parallel(args.source, args.target, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truncated = truncate_corpus(corpus, TruncationLevel(args.s))
    write_parallel(truncated, out / "truncated.src", out / "truncated.tgt")
    write_manifest(out, "truncate", {"s": args.s}, {"source": args.source, "target": args.target})
    print(f"truncated {len(corpus)} sources at s={args.s} -> {out}")
    return 0


def cmd_prepare(args) -> int:
    merges = load_merges(args.merges)
    vocab = load_vocabulary(args.vocab)
    corpus = _load_clean(args.source, args.target, args.split)
    truncated = truncate_corpus(corpus, TruncationLevel(args.s))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src_lines, tgt_lines = [], []
    for pair in truncated:
        src_lines.append(" ".join(apply_bpe(merges, pair.source)))
        tgt_lines.append(" ".join(apply_bpe(merges, pair.target)))
    (out / f"{args.split}.bpe.src").write_text("".join(l + "\n" for l in src_lines), encoding="utf-8")
    (out / f"{args.split}.bpe.tgt").write_text("".join(l + "\n" for l in tgt_lines), encoding="utf-8")
    save_vocabulary(vocab, out / "vocab.tsv")
    write_manifest(
        out,
        "prepare",
        {"s": args.s, "split": args.split},
        {"source": args.source, "target": args.target, "merges": args.merges, "vocab": args.vocab},
    )
    print(f"prepared {len(truncated)} pairs at s={args.s} -> {out}")
    return 0


def _read_bpe_lines(path):
    return [line.split() if line else [] for line in Path(path).read_text(encoding="utf-8").splitlines()]


def _encode_prepared(path, vocab):
    table = vocab.token_to_id
    unk = vocab.unk_id
    return [[table.get(tok, unk) for tok in line] for line in _read_bpe_lines(path)]


def cmd_fit(args) -> int:
    from .models import SmoothingConfig, smooth

    vocab = load_vocabulary(args.vocab)
    sources = _encode_prepared(args.prepared_source, vocab)
    targets = _encode_prepared(args.prepared_target, vocab)
    if len(sources) != len(targets):
        raise ValueError("prepared source/target line counts differ")
    weights = [float(w) for w in args.weights.split(",")] if args.weights else None
    model = fit_conditional_ngram(
        list(zip(sources, targets)),
        vocab,
        order=args.ngram_order,
        lam=args.lam,
        additive=args.additive,
        interpolation_weights=weights,
    )
    if args.epsilon > 0:
        model = smooth(model, SmoothingConfig(args.epsilon))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.txt")
    write_manifest(
        out,
        "fit",
        {
            "ngram_order": args.ngram_order,
            "lambda": args.lam,
            "additive": args.additive,
            "epsilon": args.epsilon,
            "weights": args.weights,
        },
        {"prepared_source": args.prepared_source, "prepared_target": args.prepared_target, "vocab": args.vocab},
    )
    print(f"fitted conditional model (order {args.ngram_order}) -> {out / 'model.txt'}")
    return 0


def cmd_decode(args) -> int:
    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model)
    sources = _encode_prepared(args.prepared_source, vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    config = DecodeConfig(beam_size=args.beam_size, max_len=args.max_len)
    for idx, src in enumerate(sources):
        pool = beam_search(model, src, config)
        top = pool[0]
        entries.append((idx, top.tokens, round(top.logprob, 9)))
    dump_hypotheses(entries, vocab.id_to_token, out / "hypotheses.tsv")
    plain = "".join(
        " ".join(vocab.id_to_token[t] for t in tokens if t != vocab.eos_id) + "\n"
        for _, tokens, _ in entries
    )
    (out / "hypotheses.txt").write_text(plain, encoding="utf-8")
    write_manifest(
        out,
        "decode",
        {"beam_size": args.beam_size, "max_len": args.max_len},
        {"model": args.model, "vocab": args.vocab, "prepared_source": args.prepared_source},
    )
    print(f"decoded {len(sources)} sentences (k={args.beam_size}) -> {out / 'hypotheses.tsv'}")
    return 0


def cmd_sample(args) -> int:
    vocab = load_vocabulary(args.vocab)
    model = load_model(args.model)
    sources = _encode_prepared(args.prepared_source, vocab)
    from .rng import derive_seed

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, src in enumerate(sources):
        sample_set = ancestral_sample(
            model, src, args.samples, derive_seed(args.seed, "sentence", idx), max_len=args.max_len
        )
        for tokens, lp in sample_set.samples:
            entries.append((idx, tokens, round(lp, 9)))
    dump_hypotheses(entries, vocab.id_to_token, out / "samples.tsv")
    write_manifest(
        out,
        "sample",
        {"samples": args.samples, "max_len": args.max_len},
        {"model": args.model, "vocab": args.vocab, "prepared_source": args.prepared_source},
        seed=args.seed,
    )
    print(f"sampled {args.samples} sequences for {len(sources)} sentences -> {out / 'samples.tsv'}")
    return 0


def cmd_eval(args) -> int:
    hyp_lines = _read_bpe_lines(args.hyp)
    ref_lines = _read_bpe_lines(args.ref)
    if len(hyp_lines) != len(ref_lines):
        raise ValueError("hypothesis and reference line counts differ")
    if args.metric == "length_ratio":
        value = length_ratio([EvalPair(tuple(h), tuple(r)) for h, r in zip(hyp_lines, ref_lines)])
    elif args.metric == "bleu":
        value = bleu(hyp_lines, ref_lines)
    elif args.metric == "unique_ngrams":
        value = corpus_repetition(hyp_lines, args.ngram_order)
    else:
        raise ValueError(f"unknown metric {args.metric}")
    print(repr(value))
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        data["master_seed"] = args.seed
        config = SweepConfig.from_json(json.dumps(data))
    else:
        config = SweepConfig(master_seed=args.seed)
    inputs = {}
    if args.config:
        inputs["config"] = args.config
    if config.train_source:
        inputs.update(
            {
                "train_source": config.train_source,
                "train_target": config.train_target,
                "test_source": config.test_source,
                "test_target": config.test_target,
            }
        )
    run_sweep(config, args.out, workers=args.workers)
    (Path(args.out) / "config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    write_manifest(args.out, "sweep", json.loads(config.to_json()), inputs, seed=config.master_seed)
    print(f"sweep complete -> {args.out}/records.csv ({worker_count() if args.workers is None else args.workers} workers)")
    return 0


def cmd_serve_check(args) -> int:
    vocab = load_vocabulary(args.vocab)
    if args.cmd:
        endpoint = BridgeEndpoint(command=tuple(args.cmd), timeout_ms=args.timeout_ms)
    else:
        endpoint = BridgeEndpoint(host=args.host, port=args.port, timeout_ms=args.timeout_ms)
    results = run_conformance(endpoint, vocab)
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="constrainlab",
        description="constrained-generation degeneracy laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-corpus", help="generate the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(fn=cmd_toy_corpus)

    p = sub.add_parser("learn-bpe", help="learn merges jointly on an untruncated corpus")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--merges", type=int, default=8000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_learn_bpe)

    p = sub.add_parser("truncate", help="truncate every source at a level s")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_truncate)

    p = sub.add_parser("prepare", help="clean, truncate, and BPE-encode one split")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="train")
    p.add_argument("--merges", required=True, help="merge file from learn-bpe")
    p.add_argument("--vocab", required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("fit", help="fit the reference conditional model on prepared data")
    p.add_argument("--prepared-source", required=True)
    p.add_argument("--prepared-target", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--ngram-order", type=int, default=2)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--additive", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=0.0, help="label-smoothing mix weight")
    p.add_argument("--weights", help="comma-separated interpolation weights, highest order first")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("decode", help="beam-decode prepared sources with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prepared-source", required=True)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-len", type=int, default=300)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("sample", help="draw ancestral samples with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prepared-source", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--max-len", type=int, default=300)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="score a hypothesis file against a reference file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("length_ratio", "bleu", "unique_ngrams"), required=True)
    p.add_argument("--ngram-order", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="run the full constrainedness x decoder grid")
    p.add_argument("--config", help="JSON file mirroring SweepConfig")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve-check", help="bridge conformance suite against a server")
    p.add_argument("--vocab", required=True)
    p.add_argument("--cmd", nargs=argparse.REMAINDER, help="child-process command")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--timeout-ms", type=int, default=10000)
    p.set_defaults(fn=cmd_serve_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - single-line machine-parsable error contract
        print(json.dumps({"error": f"{type(e).__name__}: {e}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
