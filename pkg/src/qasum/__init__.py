"""Question-answering driven summarization of clinical note corpora."""

__version__ = "0.1.0"
