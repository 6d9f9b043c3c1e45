"""AI vulnerability database: records, AI-aware severity scoring, weakness catalog, AIBOM and registry."""

__version__ = "0.1.0"
