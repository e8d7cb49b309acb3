"""Aspect-based sentiment analysis pipeline for restaurant review corpora."""

__version__ = "0.1.0"
