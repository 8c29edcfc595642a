"""Sandbox-side program runner speaking the stdin/stdout wire protocol."""

from .runner import READY_LINE, RESULT_SENTINEL, run_once

__version__ = "0.1.0"

__all__ = ["READY_LINE", "RESULT_SENTINEL", "run_once", "__version__"]
