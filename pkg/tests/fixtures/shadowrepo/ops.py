"""Shadowing behavior demonstrations over the shared state."""

from state import COUNTER, STEP, bump

SCALE = 10


def scaled_counter():
    """Current counter value multiplied by the scale."""
    return bump() * SCALE


def shadow_param(STEP):
    """STEP here is a parameter, not the shared constant."""
    return bump() + STEP


def shadow_loop(values):
    """The loop variable hides the imported counter name."""
    total = 0
    for COUNTER in values:
        total += COUNTER
    return total + STEP


def shadow_nested(values):
    """A nested helper's parameter also hides the shared name."""

    def pick(STEP):
        return STEP * 2

    return [pick(v) for v in values] and bump()


def late_global():
    """Write the counter without reading it; store-only access."""
    global COUNTER
    COUNTER = 99
