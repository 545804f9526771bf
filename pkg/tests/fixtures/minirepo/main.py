"""URL validation built on the shared string helpers."""

from utils import is_full_string, MAX_LEN


def is_url(value):
    """Return True when value looks like a well-formed http(s) URL."""
    if not is_full_string(value):
        return False
    if len(value) > MAX_LEN:
        return False
    return value.startswith(("http://", "https://"))
