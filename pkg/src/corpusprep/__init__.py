"""Corpus curation pipeline: WET ingestion, language gating, dedup, filtering."""

__version__ = "0.1.0"
