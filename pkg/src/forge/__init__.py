"""forge: a resumable LLM pipeline for synthesizing multi-subject reasoning data."""

__version__ = "0.1.0"
