"""Checkpoint-to-embeddings exporter for the phonocoref toolkit."""

__version__ = "0.1.0"
