"""Encoder, dual pointer decoder and parameters."""

from .decoder import (
    BACKWARD,
    BOTH,
    FORWARD,
    DecoderOutput,
    PredictedTriple,
    TripleSet,
    assemble_triples,
    decode,
    forward_only_ceiling,
    pointer_attention_multi,
    pointer_attention_single,
    relation_readout,
    self_mask,
)
from .encoder import (
    INFERENCE,
    EncodedSentence,
    RunMode,
    context_to_entity_attention,
    embed_entities,
    embed_words,
    encode,
    encode_context,
    encode_entities,
)
from .features import Features, featurize
from .network import DualPointerNet, ForwardPass
from .params import ATTENTION_KINDS, Hyperparams, ParameterSet, init_params

__all__ = [
    "ATTENTION_KINDS", "BACKWARD", "BOTH", "DecoderOutput", "DualPointerNet", "EncodedSentence",
    "FORWARD", "Features", "ForwardPass", "Hyperparams", "INFERENCE", "ParameterSet",
    "PredictedTriple", "RunMode", "TripleSet", "assemble_triples", "context_to_entity_attention",
    "decode", "embed_entities", "embed_words", "encode", "encode_context", "encode_entities",
    "featurize", "forward_only_ceiling", "init_params", "pointer_attention_multi",
    "pointer_attention_single", "relation_readout", "self_mask",
]
