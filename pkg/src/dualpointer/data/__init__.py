"""Corpus types, preprocessing, vocabularies and pointer supervision."""

from .example import (
    CorpusError,
    Entity,
    Example,
    ParseError,
    Triple,
    dump_corpus,
    load_corpus,
    save_corpus,
)
from .preprocess import (
    EPO,
    NORMAL,
    OVERLAP_TYPES,
    SEO,
    CorpusStats,
    MergeConflictError,
    TripleRecord,
    classify_overlap,
    corpus_stats,
    merge_shared_sentences,
    split_dataset,
)
from .synthetic import PATTERNS, SyntheticSpec, generate_synthetic
from .targets import NULL, PointerTargets, compute_pointer_targets
from .vocab import NONE_ID, NONE_RELATION, PAD_ID, UNK_ID, Vocab, build_vocabs, load_glove

__all__ = [
    "CorpusError", "CorpusStats", "EPO", "Entity", "Example", "MergeConflictError",
    "NONE_ID", "NONE_RELATION", "NORMAL", "NULL", "OVERLAP_TYPES", "PAD_ID", "PATTERNS",
    "ParseError", "PointerTargets", "SEO", "SyntheticSpec", "Triple", "TripleRecord",
    "UNK_ID", "Vocab", "build_vocabs", "classify_overlap", "compute_pointer_targets",
    "corpus_stats", "dump_corpus", "generate_synthetic", "load_corpus", "load_glove",
    "merge_shared_sentences", "save_corpus", "split_dataset",
]
