"""Persona-conditioned summarization toolkit.

Pipeline stages: corpus ingestion and splitting, teacher summary generation,
four-step quality filtering, fine-tune export, student inference, reference
metrics, LLM-judge critique, agreement statistics, and a small annotation
service with a web UI.
"""

from __future__ import annotations

__version__ = "0.1.0"


class PersonasumError(Exception):
    """Base class for all pipeline errors."""
