"""Phonology-aware embedding toolkit: Assamese G2P and articulatory features,
embedding dispersal, anisotropy diagnostics, and cross-document event
coreference with reference evaluation metrics."""

__version__ = "0.1.0"
