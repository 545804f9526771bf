"""Text cleanup toolkit."""
