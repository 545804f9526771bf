"""Engine package; re-exports the run helpers."""

from .core import run_once

VERSION = "1.0"
