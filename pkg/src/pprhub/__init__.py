"""Personalized PageRank hub decomposition and configuration-model experiments."""

__version__ = "0.1.0"
