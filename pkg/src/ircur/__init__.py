"""Cross-modal difficulty scoring, curriculum schedules, QA generation, and benchmark metrics."""

__version__ = "0.1.0"
