"""Summary quality metrics: ROUGE, BLEU, METEOR, and embedding-based scoring."""

from personasum.metrics.lcs import BACKEND, lcs_length
from personasum.metrics.scores import (
    PRF,
    CorpusMetricReport,
    EmbedderUnavailable,
    EmbeddingProvider,
    HttpEmbeddingProvider,
    MetricError,
    MetricReport,
    bertscore,
    bleu,
    evaluate_corpus,
    meteor,
    ngrams,
    rouge_1,
    rouge_2,
    rouge_l,
    rouge_n,
    score_pair,
    tokenize,
)
from personasum.metrics.stem import stem

__all__ = [
    "BACKEND", "PRF", "CorpusMetricReport", "EmbedderUnavailable",
    "EmbeddingProvider", "HttpEmbeddingProvider", "MetricError", "MetricReport",
    "bertscore", "bleu", "evaluate_corpus", "lcs_length", "meteor", "ngrams",
    "rouge_1", "rouge_2", "rouge_l", "rouge_n", "score_pair", "stem", "tokenize",
]
