"""Dual pointer network for extracting multiple relation triples from a sentence."""

__version__ = "0.1.0"
