"""constrainlab: a laboratory for constrained-generation degeneracy studies.

The package turns an ordinary parallel corpus into a family of tasks of
varying constrainedness by truncating source sentences, fits reference
conditional models, decodes them with mode-seeking and sampling decoders,
and measures length bias, repetition, and distribution peakedness across
the whole grid.
"""

from .corpus import (
    CorpusError,
    ParallelCorpus,
    Sentence,
    SentencePair,
    TruncationLevel,
    load_parallel,
    remove_copy_noise,
    truncate_corpus,
    truncate_sentence,
)
from .bpe import (
    BpeError,
    BpeModel,
    Vocabulary,
    apply_bpe,
    build_vocabulary,
    decode,
    detokenize,
    encode,
    encode_corpus,
    learn_bpe,
    load_merges,
    load_vocabulary,
    save_merges,
    save_vocabulary,
)
from .models import (
    ConditionalLM,
    ConditionalNGramModel,
    ModelError,
    SmoothingConfig,
    UnigramModel,
    fit_conditional_ngram,
    fit_unigram,
    load_model,
    save_model,
    sequence_logprob,
    smooth,
)
from .decoding import (
    DecodeConfig,
    DecodeError,
    Hypothesis,
    SampleSet,
    ancestral_sample,
    beam_search,
    exhaustive_mode,
    greedy,
)
from .metrics import (
    EvalPair,
    MetricError,
    bleu,
    corpus_repetition,
    entropy_estimate,
    length_ratio,
    mass_coverage,
    unique_count,
    unique_ngram_fraction,
)
from .rng import derive_seed

__version__ = "0.1.0"
