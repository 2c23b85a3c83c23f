"""Battery health-indicator extraction, evaluation and screening."""

__version__ = "0.1.0"
