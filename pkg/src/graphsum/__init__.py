"""Summarize C functions by encoding their program graphs.

The library parses a C-subset function, builds a joint syntax/control/data
graph over it, encodes the graph with a retrieval-augmented hybrid message
passing network, and decodes a natural language summary. Everything runs on
an in-package tensor core; a trained model is a single archive file.
"""

from .config import Config, load_config_file
from .cpg import CodeGraph, EdgeType, build_cpg, from_json, graph_from_source, to_dot, to_json
from .decoder import DecoderParams, beam_search, teacher_forced_loss
from .encoder import EncodedFunction, EncoderParams, RetrievedContext, Vocab, encode
from .errors import (
    AnalysisError,
    ContractError,
    DataError,
    GraphSumError,
    LexError,
    NumericError,
    ParseError,
    RetrievalError,
    ShapeError,
)
from .frontend import parse_source, pretty_print, subtoken_split, tokenize
from .metrics import bleu4, meteor, rouge_l
from .pipeline import (
    Model,
    RetrievalState,
    evaluate_model,
    load_checkpoint,
    prepare_corpus,
    save_checkpoint,
    summarize_one,
    train,
)
from .retrieval import (
    CorpusEntry,
    RetrievalHit,
    bow_vector,
    cosine_similarity,
    edit_distance_similarity,
    load_corpus,
    retrieve_top1,
    save_corpus,
)
from .tensor import Adam, SplitMix64, Tensor, backward, seed_all

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AnalysisError",
    "CodeGraph",
    "Config",
    "ContractError",
    "CorpusEntry",
    "DataError",
    "DecoderParams",
    "EdgeType",
    "EncodedFunction",
    "EncoderParams",
    "GraphSumError",
    "LexError",
    "Model",
    "NumericError",
    "ParseError",
    "RetrievalError",
    "RetrievalHit",
    "RetrievalState",
    "RetrievedContext",
    "ShapeError",
    "SplitMix64",
    "Tensor",
    "Vocab",
    "backward",
    "beam_search",
    "bleu4",
    "bow_vector",
    "build_cpg",
    "cosine_similarity",
    "edit_distance_similarity",
    "encode",
    "evaluate_model",
    "from_json",
    "graph_from_source",
    "load_checkpoint",
    "load_config_file",
    "load_corpus",
    "meteor",
    "parse_source",
    "prepare_corpus",
    "pretty_print",
    "retrieve_top1",
    "rouge_l",
    "save_checkpoint",
    "save_corpus",
    "seed_all",
    "subtoken_split",
    "summarize_one",
    "teacher_forced_loss",
    "to_dot",
    "to_json",
    "tokenize",
    "train",
    "__version__",
]
