"""Tuning knobs shared by the widget pipeline."""

RETRY_LIMIT = 3
BACKOFF_SECONDS = 1.5
