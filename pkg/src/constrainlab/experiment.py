"""Sweep orchestration: the full constrainedness x decoder grid.

A sweep prepares the corpus at every truncation level, fits the reference
model, decodes and samples the test set, scores everything, and emits
deterministic reports: a records CSV (one row per grid cell per restart), an
aggregates CSV (means and standard deviations over restarts), and one
whitespace table per figure analog.  All randomness flows through derived
seeds, so output bytes are independent of worker count and execution order.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bpe import BpeModel, Vocabulary, apply_bpe, build_vocabulary, encode_corpus, learn_bpe
from .corpus import ParallelCorpus, TruncationLevel, load_parallel, remove_copy_noise, truncate_corpus
from .decoding import DecodeConfig, SampleSet, ancestral_sample, beam_search
from .metrics import (
    EvalPair,
    MetricError,
    bleu,
    corpus_repetition,
    entropy_estimate,
    length_ratio,
    mass_coverage,
    unique_count,
)
from .models import ConditionalLM, SmoothingConfig, fit_conditional_ngram, smooth
from .rng import derive_seed
from .toy import generate_toy_corpus

CSV_HEADER = (
    "s,decoder,k,N,epsilon,restart_seed,length_ratio,uniq1,uniq2,uniq4,uniq6,"
    "bleu,entropy_nats,mass_coverage,unique_samples,excluded"
)

AGGREGATE_HEADER = (
    "s,decoder,k,N,epsilon,restarts,"
    + ",".join(
        f"{name}_mean,{name}_std"
        for name in (
            "length_ratio",
            "uniq1",
            "uniq2",
            "uniq4",
            "uniq6",
            "bleu",
            "entropy_nats",
            "mass_coverage",
            "unique_samples",
        )
    )
    + ",excluded"
)


class ExperimentError(RuntimeError):
    """A sweep cell failed; the message names the cell."""


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs; defaults reproduce the bundled toy study."""

    master_seed: int = 0
    s_values: tuple[int, ...] = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    beam_sizes: tuple[int, ...] = (1, 4, 16, 64)
    samples_per_sentence: int = 1000
    restarts: int = 3
    epsilons: tuple[float, ...] = (0.0, 0.1)
    ngram_orders: tuple[int, ...] = (1, 2, 4, 6)
    max_len: int = 300
    # reference model settings (tuned for the bundled toy corpus)
    order: int = 2
    lam: float = 0.22
    additive: float = 0.01
    interpolation_weights: tuple[float, ...] | None = (0.99, 0.01)
    bpe_merges: int = 4000
    # corpus: explicit file paths, or the bundled toy corpus when absent
    train_source: str | None = None
    train_target: str | None = None
    dev_source: str | None = None
    dev_target: str | None = None
    test_source: str | None = None
    test_target: str | None = None
    toy_seed: int = 2024
    dump_outputs: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SweepConfig":
        data = json.loads(text)
        for key in ("s_values", "beam_sizes", "epsilons", "ngram_orders", "interpolation_weights"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return SweepConfig(**data)


@dataclass(frozen=True)
class SweepRecord:
    """One (s, decoder, k or N, epsilon, restart) cell with all metric values."""

    s: int
    decoder: str  # "beam" or "sample"
    k: int | None
    n_samples: int | None
    epsilon: float
    restart_seed: int
    length_ratio: float | None
    uniq: dict[int, float | None]
    bleu: float | None
    entropy_nats: float | None
    mass_coverage: float | None
    unique_samples: float | None
    excluded: bool

    def csv_row(self, orders: Sequence[int]) -> str:
        cells = [
            str(self.s),
            self.decoder,
            _fmt(self.k),
            _fmt(self.n_samples),
            _fmt(self.epsilon),
            str(self.restart_seed),
            _fmt(self.length_ratio),
        ]
        cells.extend(_fmt(self.uniq.get(n)) for n in orders)
        cells.extend(
            [
                _fmt(self.bleu),
                _fmt(self.entropy_nats),
                _fmt(self.mass_coverage),
                _fmt(self.unique_samples),
                "true" if self.excluded else "false",
            ]
        )
        return ",".join(cells)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Corpus and model preparation
# ---------------------------------------------------------------------------


@dataclass
class PreparedBase:
    """Untruncated, cleaned corpora plus the shared tokenizer artifacts."""

    train: ParallelCorpus
    dev: ParallelCorpus
    test: ParallelCorpus
    bpe: BpeModel
    vocab: Vocabulary


@dataclass
class PreparedLevel:
    """Everything needed to run cells at one truncation level."""

    s: int
    train_pairs: list
    test_pairs: list
    test_refs: list[tuple[int, ...]]
    models: dict[float, ConditionalLM]  # epsilon -> model


def prepare_base(config: SweepConfig) -> PreparedBase:
    if config.train_source is None:
        toy = generate_toy_corpus(config.toy_seed)
        train, dev, test = toy.train, toy.dev, toy.test
    else:
        train = load_parallel(config.train_source, config.train_target, "train")
        dev = load_parallel(config.dev_source, config.dev_target, "dev")
        test = load_parallel(config.test_source, config.test_target, "test")
    train = remove_copy_noise(train)
    dev = remove_copy_noise(dev)
    test = remove_copy_noise(test)
    model = learn_bpe(train, config.bpe_merges)
    vocab = build_vocabulary(
        [apply_bpe(model, p.source) for p in train] + [apply_bpe(model, p.target) for p in train]
    )
    return PreparedBase(train, dev, test, model, vocab)


def prepare_level(base: PreparedBase, config: SweepConfig, s: int) -> PreparedLevel:
    level = TruncationLevel(s)
    train_pairs = encode_corpus(truncate_corpus(base.train, level), base.bpe, base.vocab)
    test_pairs = encode_corpus(truncate_corpus(base.test, level), base.bpe, base.vocab)
    core = fit_conditional_ngram(
        train_pairs,
        base.vocab,
        order=config.order,
        lam=config.lam,
        additive=config.additive,
        interpolation_weights=config.interpolation_weights,
    )
    models = {eps: smooth(core, SmoothingConfig(eps)) for eps in config.epsilons}
    refs = [tuple(t) for _, t in test_pairs]
    return PreparedLevel(s, train_pairs, test_pairs, refs, models)


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


def cell_id(decoder: str, k: int | None, n: int | None, epsilon: float) -> str:
    core = f"k={k}" if decoder == "beam" else f"n={n}"
    return f"{decoder}:{core}:eps={epsilon!r}"


def run_cell(
    config: SweepConfig,
    s: int,
    decoder_spec: tuple,
    seed: int,
    level: PreparedLevel | None = None,
    base: PreparedBase | None = None,
    dump_path=None,
) -> SweepRecord:
    """Execute one grid cell.

    `decoder_spec` is ("beam", k, epsilon) or ("sample", n, epsilon); `seed`
    is the cell's restart seed (recorded in the CSV).  Prepared data may be
    passed in to amortize fitting across cells.
    """
    if base is None:
        base = prepare_base(config)
    if level is None:
        level = prepare_level(base, config, s)
    kind, size, epsilon = decoder_spec
    model = level.models[epsilon]
    eos = base.vocab.eos_id

    if kind == "beam":
        entries = []
        for idx, (src, _) in enumerate(level.test_pairs):
            pool = beam_search(model, src, DecodeConfig(beam_size=size, max_len=config.max_len))
            if not pool:
                raise ExperimentError(f"beam returned no hypotheses at s={s}, k={size}")
            top = pool[0]
            entries.append((idx, top.tokens, round(top.logprob, 9)))
        outputs = [tuple(t for t in tokens if t != eos) for _, tokens, _ in entries]
        record = SweepRecord(
            s=s,
            decoder="beam",
            k=size,
            n_samples=None,
            epsilon=epsilon,
            restart_seed=seed,
            length_ratio=_safe_length_ratio(outputs, level.test_refs),
            uniq={n: _safe_repetition(outputs, n) for n in config.ngram_orders},
            bleu=bleu(outputs, level.test_refs),
            entropy_nats=None,
            mass_coverage=None,
            unique_samples=None,
            excluded=(s == 0),
        )
    elif kind == "sample":
        entries = []
        per_sentence_sets = []
        for idx, (src, _) in enumerate(level.test_pairs):
            sent_seed = derive_seed(seed, "sentence", idx)
            sample_set = ancestral_sample(model, src, size, sent_seed, max_len=config.max_len)
            rounded = SampleSet(
                tuple((tokens, round(lp, 9)) for tokens, lp in sample_set.samples),
                sample_set.seed,
            )
            per_sentence_sets.append(rounded)
            for tokens, lp in rounded.samples:
                entries.append((idx, tokens, lp))
        outputs = [tuple(t for t in tokens if t != eos) for _, tokens, _ in entries]
        repeated_refs = [
            level.test_refs[idx] for idx, _, _ in entries
        ]
        record = SweepRecord(
            s=s,
            decoder="sample",
            k=None,
            n_samples=size,
            epsilon=epsilon,
            restart_seed=seed,
            length_ratio=_safe_length_ratio(outputs, repeated_refs),
            uniq={n: _safe_repetition(outputs, n) for n in config.ngram_orders},
            bleu=bleu(outputs, repeated_refs),
            entropy_nats=float(np.mean([entropy_estimate(ss) for ss in per_sentence_sets])),
            mass_coverage=float(np.mean([mass_coverage(ss) for ss in per_sentence_sets])),
            unique_samples=float(np.mean([unique_count(ss) for ss in per_sentence_sets])),
            excluded=False,
        )
    else:
        raise ExperimentError(f"unknown decoder kind {kind!r}")

    if dump_path is not None:
        from .decoding import dump_hypotheses

        dump_hypotheses(entries, base.vocab.id_to_token, dump_path)
    return record


def _safe_length_ratio(outputs, refs) -> float | None:
    try:
        return length_ratio([EvalPair(h, r) for h, r in zip(outputs, refs)])
    except MetricError:
        return None


def _safe_repetition(outputs, n) -> float | None:
    try:
        return corpus_repetition(outputs, n)
    except MetricError:
        return None


# ---------------------------------------------------------------------------
# The sweep
# ---------------------------------------------------------------------------

_BASE_CACHE: dict[str, PreparedBase] = {}


def _cached_base(config_json: str) -> PreparedBase:
    base = _BASE_CACHE.get(config_json)
    if base is None:
        base = prepare_base(SweepConfig.from_json(config_json))
        _BASE_CACHE[config_json] = base
    return base


def _run_level_block(config_json: str, s: int, dump_dir: str | None) -> list[SweepRecord]:
    """All cells and restarts at one truncation level (worker entry point)."""
    config = SweepConfig.from_json(config_json)
    base = _cached_base(config_json)
    level = prepare_level(base, config, s)
    records = []
    beam_cache: dict[tuple, SweepRecord] = {}

    def guarded(spec, seed, restart, dump):
        try:
            return run_cell(config, s, spec, seed, level=level, base=base, dump_path=dump)
        except Exception as e:
            raise ExperimentError(
                f"cell failed: s={s}, decoder={spec[0]}, size={spec[1]}, "
                f"epsilon={spec[2]}, restart={restart}: {e}"
            ) from e

    for epsilon in config.epsilons:
        for k in config.beam_sizes:
            spec = ("beam", k, epsilon)
            for restart in range(config.restarts):
                seed = derive_seed(config.master_seed, s, cell_id("beam", k, None, epsilon), restart)
                cached = beam_cache.get((k, epsilon))
                dump = _dump_path(dump_dir, s, spec, restart)
                if cached is None or dump is not None:
                    rec = guarded(spec, seed, restart, dump)
                    beam_cache[(k, epsilon)] = rec
                else:
                    rec = cached
                records.append(replace(rec, restart_seed=seed))
        spec = ("sample", config.samples_per_sentence, epsilon)
        for restart in range(config.restarts):
            seed = derive_seed(
                config.master_seed, s, cell_id("sample", None, config.samples_per_sentence, epsilon), restart
            )
            dump = _dump_path(dump_dir, s, spec, restart)
            records.append(guarded(spec, seed, restart, dump))
    return records


def _dump_path(dump_dir, s, spec, restart):
    if dump_dir is None:
        return None
    kind, size, epsilon = spec
    name = f"s{s}_eps{epsilon!r}_{kind}{size}_r{restart}.tsv"
    return str(Path(dump_dir) / name)


def worker_count() -> int:
    """Worker parallelism: CONSTRAINLAB_WORKERS, defaulting to 1."""
    raw = os.environ.get("CONSTRAINLAB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(config: SweepConfig, out_dir, workers: int | None = None) -> list[SweepRecord]:
    """Run every cell x restart; write records, aggregates, and plot data.

    Output bytes depend only on the config (worker count changes nothing).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_dir = None
    if config.dump_outputs:
        dump_dir = str(out / "dumps")
        Path(dump_dir).mkdir(exist_ok=True)
    config_json = config.to_json()
    _cached_base(config_json)  # built pre-fork so workers inherit it

    n_workers = worker_count() if workers is None else max(1, workers)
    if n_workers == 1 or len(config.s_values) == 1:
        blocks = [_run_level_block(config_json, s, dump_dir) for s in config.s_values]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(_run_level_block, config_json, s, dump_dir) for s in config.s_values
            ]
            blocks = [f.result() for f in futures]

    records = [rec for block in blocks for rec in block]
    records.sort(key=_record_key)
    aggregates = aggregate_records(records, config)

    (out / "records.csv").write_text(records_csv(records, config), encoding="utf-8")
    (out / "aggregates.csv").write_text(aggregates_csv(aggregates, config), encoding="utf-8")
    write_plot_data(aggregates, config, prepare_base_refs(config), out)
    return records


def _record_key(rec: SweepRecord):
    return (
        rec.s,
        rec.decoder,
        rec.k if rec.k is not None else -1,
        rec.n_samples if rec.n_samples is not None else -1,
        rec.epsilon,
        rec.restart_seed,
    )


def records_csv(records: Sequence[SweepRecord], config: SweepConfig) -> str:
    lines = [CSV_HEADER]
    lines.extend(rec.csv_row(config.ngram_orders) for rec in records)
    return "\n".join(lines) + "\n"


def aggregate_records(records: Sequence[SweepRecord], config: SweepConfig):
    """Per-cell means and standard deviations over restarts."""
    groups: dict[tuple, list[SweepRecord]] = {}
    for rec in records:
        key = (rec.s, rec.decoder, rec.k, rec.n_samples, rec.epsilon)
        groups.setdefault(key, []).append(rec)
    aggregates = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2] or -1, k[3] or -1, k[4])):
        group = groups[key]
        agg = {"key": key, "restarts": len(group), "excluded": group[0].excluded}
        for name in ("length_ratio", "bleu", "entropy_nats", "mass_coverage", "unique_samples"):
            agg[name] = _mean_std([getattr(r, name) for r in group])
        for n in config.ngram_orders:
            agg[f"uniq{n}"] = _mean_std([r.uniq.get(n) for r in group])
        aggregates.append(agg)
    return aggregates


def _mean_std(values):
    if any(v is None for v in values):
        return (None, None)
    arr = np.asarray(values, dtype=np.float64)
    return (float(arr.mean()), float(arr.std()))


def aggregates_csv(aggregates, config: SweepConfig) -> str:
    lines = [AGGREGATE_HEADER]
    for agg in aggregates:
        s, decoder, k, n, epsilon = agg["key"]
        cells = [str(s), decoder, _fmt(k), _fmt(n), _fmt(epsilon), str(agg["restarts"])]
        for name in ("length_ratio", "uniq1", "uniq2", "uniq4", "uniq6", "bleu",
                     "entropy_nats", "mass_coverage", "unique_samples"):
            mean, std = agg[name]
            cells.append(_fmt(mean))
            cells.append(_fmt(std))
        cells.append("true" if agg["excluded"] else "false")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def prepare_base_refs(config: SweepConfig) -> dict[int, float | None]:
    """Reference-side repetition baselines, by n-gram order."""
    base = _cached_base(config.to_json())
    refs = [tuple(t) for _, t in encode_corpus(base.test, base.bpe, base.vocab)]
    return {n: _safe_repetition(refs, n) for n in config.ngram_orders}


def write_plot_data(aggregates, config: SweepConfig, ref_repetition, out_dir) -> None:
    """One whitespace-separated table per figure analog; columns in README."""
    out = Path(out_dir)
    index = {agg["key"]: agg for agg in aggregates}

    def val(s, decoder, k, n, eps, name):
        agg = index.get((s, decoder, k, n, eps))
        if agg is None:
            return None
        return agg[name][0]

    def fmt(v):
        return "nan" if v is None else repr(v)

    n_samp = config.samples_per_sentence
    eps0 = config.epsilons[0]
    eps1 = config.epsilons[1] if len(config.epsilons) > 1 else config.epsilons[0]
    s_all = list(config.s_values)
    s_beam = [s for s in s_all if s != 0]  # beam rows at s=0 are excluded

    def table(name, header, rows):
        text = header + "\n" + "\n".join(rows) + "\n"
        (out / name).write_text(text, encoding="utf-8")

    for fig, metric in (("fig2a_entropy.dat", "entropy_nats"),
                        ("fig2b_mass.dat", "mass_coverage"),
                        ("fig2c_unique.dat", "unique_samples")):
        table(
            fig,
            f"# s {metric}",
            [f"{s} {fmt(val(s, 'sample', None, n_samp, eps0, metric))}" for s in s_all],
        )
    table(
        "fig3_bleu.dat",
        "# s bleu_beam4",
        [f"{s} {fmt(val(s, 'beam', 4, None, eps0, 'bleu'))}" for s in s_beam],
    )
    table(
        "fig4_length.dat",
        "# s " + " ".join(f"lr_k{k}" for k in config.beam_sizes),
        [
            f"{s} " + " ".join(fmt(val(s, "beam", k, None, eps0, "length_ratio")) for k in config.beam_sizes)
            for s in s_beam
        ],
    )
    table(
        "fig5_repetition.dat",
        "# s " + " ".join(f"uniq1_k{k}" for k in config.beam_sizes) + " uniq1_ref",
        [
            f"{s} "
            + " ".join(fmt(val(s, "beam", k, None, eps0, "uniq1")) for k in config.beam_sizes)
            + f" {fmt(ref_repetition.get(1))}"
            for s in s_beam
        ],
    )
    table(
        "fig6_length_samples.dat",
        "# s lr_samples",
        [f"{s} {fmt(val(s, 'sample', None, n_samp, eps0, 'length_ratio'))}" for s in s_all],
    )
    table(
        "fig7_repetition_samples.dat",
        "# s uniq1_samples uniq1_ref",
        [
            f"{s} {fmt(val(s, 'sample', None, n_samp, eps0, 'uniq1'))} {fmt(ref_repetition.get(1))}"
            for s in s_all
        ],
    )
    table(
        "fig8_smoothing_peakedness.dat",
        "# s entropy_eps0 entropy_eps1 mass_eps0 mass_eps1 unique_eps0 unique_eps1",
        [
            f"{s} "
            + " ".join(
                fmt(val(s, "sample", None, n_samp, eps, m))
                for m in ("entropy_nats", "mass_coverage", "unique_samples")
                for eps in (eps0, eps1)
            )
            for s in s_all
        ],
    )
    table(
        "fig9_smoothing_effects.dat",
        "# s lr_samples_eps0 lr_samples_eps1 lr_beam4_eps0 lr_beam4_eps1"
        " uniq1_samples_eps0 uniq1_samples_eps1 uniq1_beam4_eps0 uniq1_beam4_eps1",
        [
            f"{s} "
            + f"{fmt(val(s, 'sample', None, n_samp, eps0, 'length_ratio'))} "
            + f"{fmt(val(s, 'sample', None, n_samp, eps1, 'length_ratio'))} "
            + f"{fmt(val(s, 'beam', 4, None, eps0, 'length_ratio'))} "
            + f"{fmt(val(s, 'beam', 4, None, eps1, 'length_ratio'))} "
            + f"{fmt(val(s, 'sample', None, n_samp, eps0, 'uniq1'))} "
            + f"{fmt(val(s, 'sample', None, n_samp, eps1, 'uniq1'))} "
            + f"{fmt(val(s, 'beam', 4, None, eps0, 'uniq1'))} "
            + f"{fmt(val(s, 'beam', 4, None, eps1, 'uniq1'))}"
            for s in s_beam
        ],
    )


# ---------------------------------------------------------------------------
# Optional dev-set lambda selection
# ---------------------------------------------------------------------------


def select_lambda(config: SweepConfig, s: int, grid=(0.25, 0.5, 0.75), beam_size: int = 4) -> float:
    """Pick the interpolation weight with the best dev BLEU at level s."""
    base = _cached_base(config.to_json())
    level_obj = TruncationLevel(s)
    train_pairs = encode_corpus(truncate_corpus(base.train, level_obj), base.bpe, base.vocab)
    dev_pairs = encode_corpus(truncate_corpus(base.dev, level_obj), base.bpe, base.vocab)
    refs = [tuple(t) for _, t in dev_pairs]
    eos = base.vocab.eos_id
    best = (None, None)
    for lam in grid:
        model = fit_conditional_ngram(
            train_pairs,
            base.vocab,
            order=config.order,
            lam=lam,
            additive=config.additive,
            interpolation_weights=config.interpolation_weights,
        )
        outputs = []
        for src, _ in dev_pairs:
            pool = beam_search(model, src, DecodeConfig(beam_size=beam_size, max_len=config.max_len))
            outputs.append(tuple(t for t in pool[0].tokens if t != eos))
        score = bleu(outputs, refs)
        if best[0] is None or score > best[0]:
            best = (score, lam)
    return best[1]


def recompute_record_from_dump(dump_path, refs, vocab: Vocabulary, orders) -> dict:
    """Recompute a cell's metrics from its dumped decoder outputs."""
    from .decoding import SampleSet

    by_sentence: dict[int, list[tuple[tuple[int, ...], float]]] = {}
    entries = []
    table = vocab.token_to_id
    for line in Path(dump_path).read_text(encoding="utf-8").splitlines():
        idx_txt, lp_txt, tok_txt = line.split("\t")
        tokens = tuple(table[t] for t in tok_txt.split()) if tok_txt else ()
        idx = int(idx_txt)
        lp = float(lp_txt)
        entries.append((idx, tokens, lp))
        by_sentence.setdefault(idx, []).append((tokens, lp))
    eos = vocab.eos_id
    outputs = [tuple(t for t in tokens if t != eos) for _, tokens, _ in entries]
    paired_refs = [refs[idx] for idx, _, _ in entries]
    result = {
        "length_ratio": _safe_length_ratio(outputs, paired_refs),
        "bleu": bleu(outputs, paired_refs),
    }
    for n in orders:
        result[f"uniq{n}"] = _safe_repetition(outputs, n)
    if all(len(v) > 1 for v in by_sentence.values()):
        sets = [SampleSet(tuple(v), seed=0) for _, v in sorted(by_sentence.items())]
        result["entropy_nats"] = float(np.mean([entropy_estimate(ss) for ss in sets]))
        result["mass_coverage"] = float(np.mean([mass_coverage(ss) for ss in sets]))
        result["unique_samples"] = float(np.mean([unique_count(ss) for ss in sets]))
    return result
