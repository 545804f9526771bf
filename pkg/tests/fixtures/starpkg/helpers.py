"""Widget helpers pulled in wholesale by the pipeline modules."""


def widget_name(widget):
    """Human-readable name for a widget mapping."""
    return widget.get("name", "unnamed")


def widget_ready(widget):
    """Whether the widget has both a name and a positive size."""
    return widget_name(widget) != "unnamed" and widget.get("size", 0) > 0
