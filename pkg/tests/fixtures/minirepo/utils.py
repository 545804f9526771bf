"""Small string helpers shared by the command-line entry points."""

MAX_LEN = 2048


def is_full_string(value):
    """Return True when value is a string with visible characters."""
    return isinstance(value, str) and value.strip() != ""


class Formatter:
    """Rewrites identifier-style strings between naming styles."""

    def camel(self, text):
        """Convert snake_case text to camelCase."""
        head, *rest = text.split("_")
        return head + "".join(word.title() for word in rest)
