import json

from . import _core
from ._core import (
    METRIC_CUTS,
    Corpus,
    MemrecError,
    build_memory,
    chronological_split,
    count_tokens,
    hit_rate_at_k,
    load_corpus,
    load_corpus_file,
    mrr_at_k,
    ndcg_at_k,
    restore_memory,
    stored_users,
    synth,
    variant_names,
)


def evaluate(corpus, variant="base", config=""):
    return json.loads(_core.evaluate(corpus, variant, config))


__all__ = [
    "METRIC_CUTS",
    "Corpus",
    "MemrecError",
    "build_memory",
    "chronological_split",
    "count_tokens",
    "evaluate",
    "hit_rate_at_k",
    "load_corpus",
    "load_corpus_file",
    "mrr_at_k",
    "ndcg_at_k",
    "restore_memory",
    "stored_users",
    "synth",
    "variant_names",
]
