"""Job orchestration helpers."""
