"""Span-based symptom event extraction with dynamic trigger masking."""

__version__ = "0.1.0"
